//! Process simulators: the VRJP and its time change, the ERRW, the
//! quenched Markov jump process, its h-transforms, and absorption
//! probabilities.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::schrodinger::GreenBundle;

/// Upper bound on chain steps in absorption estimates.
pub const ABSORPTION_STEP_CAP: usize = 50_000_000;

/// A path of a jump process.
///
/// Continuous trajectories carry entry times and final local times;
/// discrete ones (jump chains) only carry the vertex sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vertices: Vec<usize>,
    /// `entry_times[k]` is when `vertices[k]` was entered.
    pub entry_times: Option<Vec<f64>>,
    /// `L_j` at `end_time`, i.e. 1 plus the time spent at `j`.
    pub local_times: Option<Vec<f64>>,
    pub end_time: Option<f64>,
}

impl Trajectory {
    pub fn discrete(vertices: Vec<usize>) -> Self {
        Self { vertices, entry_times: None, local_times: None, end_time: None }
    }

    pub fn jumps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_continuous(&self) -> bool {
        self.entry_times.is_some()
    }

    /// The first `k` vertices after the start, if the path is that long.
    pub fn word(&self, k: usize) -> Option<Vec<usize>> {
        (self.vertices.len() > k).then(|| self.vertices[1..=k].to_vec())
    }

    /// Checks adjacency and strictly increasing entry times.
    pub fn validate(&self, g: &WeightedGraph) -> Result<()> {
        for w in self.vertices.windows(2) {
            if g.weight(w[0], w[1]).is_none() {
                return Err(Error::Graph(format!("consecutive vertices {} and {} are not adjacent", w[0], w[1])));
            }
        }
        if let Some(t) = &self.entry_times {
            if t.len() != self.vertices.len() || t.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain("entry times must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

/// When to stop a continuous simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// Run until process time reaches the horizon.
    Horizon(f64),
    /// Stop right after the given number of jumps.
    Jumps(usize),
}

/// Exact event-driven VRJP. While at `i` the neighbors' local times are
/// frozen, so the rate `sum_j W_ij L_j` is constant until the next jump.
pub fn simulate_vrjp<R: Rng + ?Sized>(g: &WeightedGraph, i0: usize, stop: Stop, rng: &mut R) -> Result<Trajectory> {
    let n = g.vertex_count();
    if i0 >= n {
        return Err(Error::Graph(format!("start vertex {i0} out of range")));
    }
    if let Stop::Horizon(h) = stop {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Domain(format!("horizon {h} must be positive and finite")));
        }
    }
    let mut local = vec![1.0; n];
    let mut vertices = vec![i0];
    let mut times = vec![0.0];
    let mut t = 0.0;
    let mut at = i0;
    loop {
        if let Stop::Jumps(k) = stop {
            if vertices.len() > k {
                break;
            }
        }
        let nbs = g.neighbors(at);
        let rate: f64 = nbs.iter().map(|nb| nb.weight * local[nb.vertex]).sum();
        let wait = if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        };
        if let Stop::Horizon(h) = stop {
            if t + wait >= h {
                local[at] += h - t;
                t = h;
                break;
            }
        } else if wait.is_infinite() {
            break;
        }
        local[at] += wait;
        t += wait;
        let mut u = rng.random::<f64>() * rate;
        let mut next = nbs[nbs.len() - 1].vertex;
        for nb in nbs {
            u -= nb.weight * local[nb.vertex];
            if u < 0.0 {
                next = nb.vertex;
                break;
            }
        }
        at = next;
        vertices.push(at);
        times.push(t);
    }
    Ok(Trajectory { vertices, entry_times: Some(times), local_times: Some(local), end_time: Some(t) })
}

/// The clock `D(s) = sum_i (L_i(s)^2 - 1)` of a continuous trajectory.
/// Only the occupied vertex's local time grows, so `D` is quadratic on
/// each holding interval and inverts in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    /// Per holding interval: start time, local time of the occupied vertex
    /// at the start, and `D` at the start.
    segments: Vec<(f64, f64, f64)>,
    end_time: f64,
    end_clock: f64,
}

impl TimeChange {
    pub fn new(traj: &Trajectory) -> Result<Self> {
        let times = traj
            .entry_times
            .as_ref()
            .ok_or_else(|| Error::Domain("time change needs a continuous trajectory".into()))?;
        let end_time = traj.end_time.unwrap_or(*times.last().unwrap_or(&0.0));
        let n = traj.vertices.iter().copied().max().map_or(0, |m| m + 1);
        let mut local = vec![1.0; n];
        let mut d = 0.0;
        let mut segments = Vec::with_capacity(times.len());
        for (k, (&v, &s)) in traj.vertices.iter().zip(times).enumerate() {
            let until = times.get(k + 1).copied().unwrap_or(end_time);
            let l = local[v];
            segments.push((s, l, d));
            let dt = until - s;
            d += dt * (2.0 * l + dt);
            local[v] = l + dt;
        }
        Ok(Self { segments, end_time, end_clock: d })
    }

    fn segment_for(&self, s: f64) -> &(f64, f64, f64) {
        let k = self.segments.partition_point(|seg| seg.0 <= s).max(1) - 1;
        &self.segments[k]
    }

    /// `D(s)` for `0 <= s <= end_time`.
    pub fn d(&self, s: f64) -> f64 {
        let &(s0, l, d0) = self.segment_for(s);
        let dt = s - s0;
        d0 + dt * (2.0 * l + dt)
    }

    /// `D^{-1}(t)` for `0 <= t <= D(end_time)`.
    pub fn d_inverse(&self, t: f64) -> f64 {
        let k = self.segments.partition_point(|seg| seg.2 <= t).max(1) - 1;
        let (s0, l, d0) = self.segments[k];
        let x = t - d0;
        // (sqrt(l^2 + x) - l) written without cancellation
        s0 + x / ((l * l + x).sqrt() + l)
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn end_clock(&self) -> f64 {
        self.end_clock
    }
}

/// Reparameterizes a continuous trajectory by `t = D(s)`. The jump chain
/// is unchanged; `local_times` of the result hold `L_i(end)^2`, which is
/// 1 plus the new-clock time spent at `i`.
pub fn time_change(traj: &Trajectory) -> Result<Trajectory> {
    let tc = TimeChange::new(traj)?;
    let times = traj.entry_times.as_ref().expect("checked by TimeChange::new");
    Ok(Trajectory {
        vertices: traj.vertices.clone(),
        entry_times: Some(times.iter().map(|&s| tc.d(s)).collect()),
        local_times: traj.local_times.as_ref().map(|l| l.iter().map(|x| x * x).collect()),
        end_time: Some(tc.end_clock()),
    })
}

/// Discrete ERRW from `i0` with initial weights `a` (one per edge of `g`).
/// Returns the path and the final edge counts `N(e)`.
pub fn simulate_errw_with_counts<R: Rng + ?Sized>(
    g: &WeightedGraph,
    a: &[f64],
    i0: usize,
    steps: usize,
    rng: &mut R,
) -> Result<(Trajectory, Vec<f64>)> {
    if a.len() != g.edge_count() {
        return Err(Error::Domain(format!("{} weights for {} edges", a.len(), g.edge_count())));
    }
    if let Some(x) = a.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("initial weight {x} must be positive")));
    }
    if i0 >= g.vertex_count() {
        return Err(Error::Graph(format!("start vertex {i0} out of range")));
    }
    let mut counts = a.to_vec();
    let mut path = Vec::with_capacity(steps + 1);
    path.push(i0);
    let mut at = i0;
    for _ in 0..steps {
        let nbs = g.neighbors(at);
        if nbs.is_empty() {
            break;
        }
        let total: f64 = nbs.iter().map(|nb| counts[nb.edge]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = nbs[nbs.len() - 1];
        for nb in nbs {
            u -= counts[nb.edge];
            if u < 0.0 {
                pick = *nb;
                break;
            }
        }
        counts[pick.edge] += 1.0;
        at = pick.vertex;
        path.push(at);
    }
    Ok((Trajectory::discrete(path), counts))
}

pub fn simulate_errw<R: Rng + ?Sized>(
    g: &WeightedGraph,
    a: &[f64],
    i0: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    simulate_errw_with_counts(g, a, i0, steps, rng).map(|r| r.0)
}

/// Simple random walk with step probabilities proportional to conductances.
pub fn simulate_srw<R: Rng + ?Sized>(g: &WeightedGraph, i0: usize, steps: usize, rng: &mut R) -> Trajectory {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(i0);
    let mut at = i0;
    for _ in 0..steps {
        let nbs = g.neighbors(at);
        if nbs.is_empty() {
            break;
        }
        let total = g.total_weight(at);
        let mut u = rng.random::<f64>() * total;
        let mut next = nbs[nbs.len() - 1].vertex;
        for nb in nbs {
            u -= nb.weight;
            if u < 0.0 {
                next = nb.vertex;
                break;
            }
        }
        at = next;
        path.push(at);
    }
    Trajectory::discrete(path)
}

/// Jump-rate table of a Markov jump process on a finite vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchedRates {
    pub root: usize,
    /// Positive rates `r(i, j)` per source vertex, sorted by target.
    pub rates: Vec<Vec<(usize, f64)>>,
    /// Exit rates `sum_j r(i, j)`.
    pub exit: Vec<f64>,
}

impl QuenchedRates {
    pub fn from_rows(root: usize, mut rates: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &mut rates {
            row.retain(|e| e.1 > 0.0);
            row.sort_by_key(|e| e.0);
            if row.iter().any(|e| !e.1.is_finite()) {
                return Err(Error::Numeric { message: "non-finite jump rate".into(), residual: f64::NAN });
            }
        }
        let exit = rates.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        Ok(Self { root, rates, exit })
    }

    /// `r(i,j) = W_ij G(root,j) / (2 G(root,i))` on the vertices of `g`.
    pub fn from_green_column(g: &WeightedGraph, g_root: &[f64], root: usize) -> Result<Self> {
        if g_root.len() != g.vertex_count() {
            return Err(Error::Domain("Green column length must match the graph".into()));
        }
        let rows = (0..g.vertex_count())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .map(|nb| (nb.vertex, 0.5 * nb.weight * g_root[nb.vertex] / g_root[i]))
                    .collect()
            })
            .collect();
        Self::from_rows(root, rows)
    }

    /// Transition probability of the jump chain.
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        self.rate(i, j) / self.exit[i]
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rates[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn vertex_count(&self) -> usize {
        self.rates.len()
    }

    fn step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Option<usize> {
        let row = &self.rates[i];
        if row.is_empty() {
            return None;
        }
        let mut u = rng.random::<f64>() * self.exit[i];
        for &(j, r) in row {
            u -= r;
            if u < 0.0 {
                return Some(j);
            }
        }
        Some(row[row.len() - 1].0)
    }
}

/// Quenched rates of the time-changed VRJP on the wired graph of `bundle`,
/// rooted at the retained vertex `i0`. `delta` has local index `bundle.n()`.
pub fn quenched_rates(bundle: &GreenBundle, i0: usize) -> Result<QuenchedRates> {
    QuenchedRates::from_green_column(&bundle.wired.base, &bundle.g_column(i0), i0)
}

/// Jump chain (and, if `holding_times`, exponential holding times) of the
/// Markov jump process with the given rates. Stops early at a vertex
/// without outgoing rates.
pub fn quenched_mjp<R: Rng + ?Sized>(
    rates: &QuenchedRates,
    start: usize,
    steps: usize,
    holding_times: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    if start >= rates.vertex_count() {
        return Err(Error::Graph(format!("start vertex {start} out of range")));
    }
    let mut path = vec![start];
    let mut times = vec![0.0];
    let mut t = 0.0;
    let mut at = start;
    for _ in 0..steps {
        let Some(next) = rates.step(at, rng) else { break };
        if holding_times {
            let e: f64 = Exp1.sample(rng);
            t += e / rates.exit[at];
            times.push(t);
        }
        at = next;
        path.push(at);
    }
    if holding_times {
        Ok(Trajectory { vertices: path, entry_times: Some(times), local_times: None, end_time: Some(t) })
    } else {
        Ok(Trajectory::discrete(path))
    }
}

/// `tilde beta_{i0} = sum_j W_{i0 j} G(i0,j) / (2 G(i0,i0))`.
pub fn root_exit_rate(bundle: &GreenBundle, i0: usize) -> f64 {
    let col = bundle.g_column(i0);
    bundle
        .wired
        .base
        .neighbors(i0)
        .iter()
        .map(|nb| 0.5 * nb.weight * col[nb.vertex] / col[i0])
        .sum()
}

/// `h(i) = Ĝ(i0,i) G(i0,i0) / (Ĝ(i0,i0) G(i0,i))`: probability that the
/// quenched chain from `i` reaches `i0` before `delta` (`h(i0) = 1`,
/// `h(delta) = 0`).
pub fn hitting_probability(bundle: &GreenBundle, i0: usize, i: usize) -> f64 {
    let hat = bundle.hat_g_column(i0);
    let g = bundle.g_column(i0);
    hat[i] * g[i0] / (hat[i0] * g[i])
}

/// Escape probability of the quenched chain rooted at `i0`, started at
/// `i`. At finite volume "never returns to `i0`" reads "hits `delta`
/// before returning to `i0`" (for `i = i0`, after at least one step).
pub fn escape_probability_formula(bundle: &GreenBundle, i0: usize, i: usize) -> f64 {
    let hat = bundle.hat_g_column(i0);
    let g = bundle.g_column(i0);
    let psi = bundle.psi_extended();
    let gamma = bundle.gamma;
    if i == i0 {
        let bt = root_exit_rate(bundle, i0);
        psi[i0] * psi[i0] / (4.0 * gamma * bt * hat[i0] * g[i0])
    } else {
        psi[i0] / (2.0 * gamma) * (hat[i0] * psi[i] - hat[i] * psi[i0]) / (hat[i0] * g[i])
    }
}

/// Which conditioning to apply in [`h_transform_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Conditioned to return to the root (run up to the first return).
    Return,
    /// Conditioned to reach `delta` without returning to the root.
    NoReturn,
}

/// Rates of the quenched chain conditioned on returning to `i0` (rates
/// use `Ĝ(i0,·)` ratios) or on escaping (rates use
/// `Ǧ(i0,j) = Ĝ(i0,i0) psi(j) - Ĝ(i0,j) psi(i0)` and jumps into `i0`
/// are blocked). `delta` is made absorbing in both cases.
pub fn h_transform_rates(bundle: &GreenBundle, i0: usize, mode: Conditioning) -> Result<QuenchedRates> {
    let n = bundle.n();
    if i0 >= n {
        return Err(Error::Domain(format!("root {i0} is not a retained vertex")));
    }
    let base = &bundle.wired.base;
    let h: Vec<f64> = match mode {
        Conditioning::Return => bundle.hat_g_column(i0),
        Conditioning::NoReturn => bundle.check_g_row(i0),
    };
    let bt = root_exit_rate(bundle, i0);
    let mut rows = vec![Vec::new(); n + 1];
    let root_norm: f64 = base
        .neighbors(i0)
        .iter()
        .filter(|nb| nb.vertex != i0)
        .map(|nb| nb.weight * h[nb.vertex])
        .sum();
    if !(root_norm > 0.0) {
        return Err(Error::Conditioning(format!(
            "conditioned chain has no admissible move from the root ({mode:?})"
        )));
    }
    for (i, row) in rows.iter_mut().enumerate().take(n) {
        for nb in base.neighbors(i) {
            let j = nb.vertex;
            let r = if i == i0 {
                bt * nb.weight * h[j] / root_norm
            } else if mode == Conditioning::NoReturn && j == i0 {
                0.0
            } else if h[i] > 0.0 {
                0.5 * nb.weight * h[j] / h[i]
            } else {
                0.0
            };
            row.push((j, r));
        }
    }
    QuenchedRates::from_rows(i0, rows)
}

/// Absorption frequencies with binomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionEstimate {
    pub targets: Vec<usize>,
    pub probability: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl AbsorptionEstimate {
    pub fn from_counts(targets: Vec<usize>, counts: &[usize], n: usize) -> Self {
        let probability: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let stderr = probability.iter().map(|p| (p * (1.0 - p) / n as f64).sqrt()).collect();
        Self { targets, probability, stderr, n }
    }

    pub fn get(&self, v: usize) -> Option<(f64, f64)> {
        let k = self.targets.iter().position(|&t| t == v)?;
        Some((self.probability[k], self.stderr[k]))
    }
}

/// Runs one chain from `start` for at least one step until it enters
/// `absorb`; returns the absorbing vertex.
pub fn absorb_once<R: Rng + ?Sized>(rates: &QuenchedRates, start: usize, absorb: &[bool], rng: &mut R) -> Result<usize> {
    let mut at = start;
    for _ in 0..ABSORPTION_STEP_CAP {
        at = rates
            .step(at, rng)
            .ok_or_else(|| Error::Coverage(format!("chain stuck at vertex {at} outside the absorbing set")))?;
        if absorb[at] {
            return Ok(at);
        }
    }
    Err(Error::Coverage("chain not absorbed within the step cap".into()))
}

/// Fraction of `n` independent chains from `start` absorbed at each
/// element of `absorb` (first visit after at least one step).
pub fn mc_return_probability<R: Rng + ?Sized>(
    rates: &QuenchedRates,
    start: usize,
    absorb: &[usize],
    n: usize,
    rng: &mut R,
) -> Result<AbsorptionEstimate> {
    let mask = absorb_mask(rates.vertex_count(), absorb)?;
    let mut counts = vec![0usize; absorb.len()];
    for _ in 0..n {
        let end = absorb_once(rates, start, &mask, rng)?;
        counts[absorb.iter().position(|&v| v == end).expect("absorbed in set")] += 1;
    }
    Ok(AbsorptionEstimate::from_counts(absorb.to_vec(), &counts, n))
}

pub fn absorb_mask(n: usize, absorb: &[usize]) -> Result<Vec<bool>> {
    if absorb.is_empty() {
        return Err(Error::Domain("absorbing set is empty".into()));
    }
    let mut mask = vec![false; n];
    for &v in absorb {
        *mask.get_mut(v).ok_or_else(|| Error::Graph(format!("absorbing vertex {v} out of range")))? = true;
    }
    Ok(mask)
}
