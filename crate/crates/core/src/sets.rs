//! Observation sets on the grid and Hausdorff-content estimates.
//!
//! A set is a subset of grid nodes. For content estimates each node stands for its grid
//! cell (a segment or square of side `h` centered on the node), so every estimate refers
//! to the thickened set `E_h`, the union of those cells:
//!
//! * upper bounds are explicit covers of `E_h` by balls centered on grid nodes with
//!   dyadic radii `h 2^m <= max_radius`;
//! * lower bounds come from the mass distribution principle applied to the uniform
//!   probability measure on `E_h`: `C^n(E_h) >= 1 / sup_B mu(B) / r(B)^n`.

use rand::{seq::IndexedRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SetShape {
    Full,
    /// Closed balls of `radius` centered on the lattice `pitch Z^d`.
    PeriodicBalls { radius: f64, pitch: f64 },
    /// Smith-Volterra-Cantor construction along every axis: at level `k` the middle
    /// `removed_fraction / 2^(k-1)` of each remaining interval is removed.
    FatCantor { depth: usize, removed_fraction: f64 },
    /// Keep the two end intervals of relative length `ratio` at every level.
    CantorDust { depth: usize, ratio: f64 },
    /// Independent node sampling with probability `density`, then repaired so that every
    /// window `B(x, radius)` holds at least a `density` fraction of its nodes.
    RandomDensity { density: f64, radius: f64, seed: u64 },
    /// `[start, start + length]` along axis 0 (a slab in 2-D).
    Interval { start: f64, length: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    #[serde(flatten)]
    pub shape: SetShape,
    /// Window radius `R` used for the density / content certificate. Defaults per shape.
    #[serde(default)]
    pub window: Option<f64>,
}

impl From<SetShape> for SetSpec {
    fn from(shape: SetShape) -> Self {
        SetSpec { shape, window: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    Density,
    Content,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    mask: Vec<bool>,
    nodes: Vec<usize>,
    pub kind: SetKind,
    pub window: f64,
    /// Density kinds: smallest `meas(omega cap B(x, R))`. Content kinds: content lower
    /// bound of the whole set at order `content_dim`.
    pub delta: f64,
    pub content_dim: Option<f64>,
    pub provenance: SetSpec,
}

impl ObservationSet {
    pub fn from_mask(mask: Vec<bool>, kind: SetKind, window: f64, provenance: SetSpec) -> Result<Self> {
        let nodes: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        if nodes.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(ObservationSet { mask, nodes, kind, window, delta: 0.0, content_dim: None, provenance })
    }

    pub fn contains(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_subset_of(&self, other: &ObservationSet) -> bool {
        self.nodes.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &ObservationSet) -> Result<ObservationSet> {
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect();
        ObservationSet::from_mask(mask, self.kind, self.window, self.provenance.clone())
    }

    /// Lebesgue measure `#nodes h^d`.
    pub fn measure(&self, grid: &Grid) -> f64 {
        self.nodes.len() as f64 * grid.cell_volume()
    }
}

fn default_window(shape: &SetShape, grid: &Grid) -> f64 {
    let l = grid.extent();
    match shape {
        SetShape::PeriodicBalls { pitch, .. } => *pitch,
        SetShape::RandomDensity { radius, .. } => *radius,
        SetShape::Full => l / 4.0,
        _ => l / 2.0,
    }
}

pub fn generate_set(spec: &SetSpec, grid: &Grid) -> Result<ObservationSet> {
    let n = grid.node_count();
    let h = grid.spacing();
    let l = grid.extent();
    let window = spec.window.unwrap_or_else(|| default_window(&spec.shape, grid));
    if !(window > 0.0) {
        return Err(invalid("window", format!("must be positive, got {window}")));
    }
    let on_axes = |member: &dyn Fn(f64) -> bool| -> Vec<bool> {
        (0..n)
            .map(|i| {
                let x = grid.coords(i);
                (0..grid.dim()).all(|a| member(x[a]))
            })
            .collect()
    };
    let mut content_dim = None;
    let mask: Vec<bool> = match &spec.shape {
        SetShape::Full => vec![true; n],
        SetShape::PeriodicBalls { radius, pitch } => {
            if !(*radius > 0.0) {
                return Err(invalid("radius", "must be positive"));
            }
            let per_axis = (l / pitch).round();
            if !(*pitch > 0.0) || per_axis < 1.0 || (per_axis * pitch - l).abs() > 1e-9 * l {
                return Err(invalid("pitch", format!("{pitch} does not divide the extent {l}")));
            }
            let tol = 1e-12 * l;
            (0..n)
                .map(|i| {
                    let x = grid.coords(i);
                    // nearest lattice center per axis
                    let c = [
                        (x[0] / pitch).round() * pitch,
                        if grid.dim() == 2 { (x[1] / pitch).round() * pitch } else { 0.0 },
                    ];
                    grid.point_distance(x, c) <= radius + tol
                })
                .collect()
        }
        SetShape::FatCantor { depth, removed_fraction } => {
            if !(*removed_fraction > 0.0 && *removed_fraction < 1.0) {
                return Err(invalid("removed_fraction", "must lie in (0, 1)"));
            }
            let intervals = fat_cantor_intervals(l, *depth, *removed_fraction);
            check_resolution(&intervals, *depth, h)?;
            on_axes(&|x| in_intervals(&intervals, x, h))
        }
        SetShape::CantorDust { depth, ratio } => {
            if !(*ratio > 0.0 && *ratio < 0.5) {
                return Err(invalid("ratio", "must lie in (0, 1/2)"));
            }
            let intervals = cantor_dust_intervals(l, *depth, *ratio);
            check_resolution(&intervals, *depth, h)?;
            content_dim = Some(grid.dim() as f64 * 2f64.ln() / (1.0 / ratio).ln());
            on_axes(&|x| in_intervals(&intervals, x, h))
        }
        SetShape::RandomDensity { density, radius, seed } => {
            if !(*density > 0.0 && *density <= 1.0) {
                return Err(invalid("density", "must lie in (0, 1]"));
            }
            random_density_mask(grid, *density, *radius, *seed)
        }
        SetShape::Interval { start, length } => {
            if !(*length > 0.0) {
                return Err(invalid("length", "must be positive"));
            }
            let tol = 1e-9 * h;
            (0..n)
                .map(|i| {
                    let rel = (grid.coords(i)[0] - start).rem_euclid(l);
                    rel <= length + tol || rel >= l - tol
                })
                .collect()
        }
    };
    let kind = if content_dim.is_some() { SetKind::Content } else { SetKind::Density };
    let mut set = ObservationSet::from_mask(mask, kind, window, spec.clone())?;
    set.content_dim = content_dim;
    set.delta = match (kind, content_dim) {
        (SetKind::Content, Some(order)) => {
            let order = order.min(grid.dim() as f64);
            hausdorff_content(&set, grid, order, (4.0 * window).max(2.0 * h))?.lower_bound
        }
        _ => verify_density(&set, grid, window, 0.0).min_measure,
    };
    Ok(set)
}

fn in_intervals(intervals: &[(f64, f64)], x: f64, h: f64) -> bool {
    let tol = 1e-9 * h;
    intervals.iter().any(|&(a, b)| x >= a - tol && x <= b + tol)
}

fn check_resolution(intervals: &[(f64, f64)], depth: usize, h: f64) -> Result<()> {
    let finest = intervals.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    if finest < 2.0 * h * (1.0 - 1e-12) {
        return Err(Error::UnderResolved { depth, finest, two_h: 2.0 * h });
    }
    Ok(())
}

pub fn fat_cantor_intervals(extent: f64, depth: usize, removed_fraction: f64) -> Vec<(f64, f64)> {
    let mut intervals = vec![(0.0, extent)];
    for level in 1..=depth {
        let frac = removed_fraction / 2f64.powi(level as i32 - 1);
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let keep = (1.0 - frac) * (b - a) / 2.0;
                [(a, a + keep), (b - keep, b)]
            })
            .collect();
    }
    intervals
}

pub fn cantor_dust_intervals(extent: f64, depth: usize, ratio: f64) -> Vec<(f64, f64)> {
    let mut intervals = vec![(0.0, extent)];
    for _ in 0..depth {
        intervals = intervals
            .into_iter()
            .flat_map(|(a, b)| {
                let keep = ratio * (b - a);
                [(a, a + keep), (b - keep, b)]
            })
            .collect();
    }
    intervals
}

/// Lattice offsets `(dx, dy)` (in node units, taken mod N) whose periodic length
/// satisfies `len * h <= reach`.
fn ball_offsets(grid: &Grid, reach: f64) -> Vec<[usize; 2]> {
    let n = grid.resolution();
    let h = grid.spacing();
    let tol = 1e-12 * grid.extent();
    let second = if grid.dim() == 2 { n } else { 1 };
    let mut out = Vec::new();
    for dy in 0..second {
        let gy = dy.min(n - dy) as f64 * h;
        for dx in 0..n {
            let gx = dx.min(n - dx) as f64 * h;
            if (gx * gx + gy * gy).sqrt() <= reach + tol {
                out.push([dx, dy]);
            }
        }
    }
    out
}

fn offset_node(grid: &Grid, node: usize, off: [usize; 2]) -> usize {
    let [i, j] = grid.lattice_index(node);
    grid.node_at([i + off[0], j + off[1]])
}

fn random_density_mask(grid: &Grid, density: f64, radius: f64, seed: u64) -> Vec<bool> {
    let n = grid.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < density).collect();
    // offsets are symmetric, so the window around `c` is `c + offsets`
    let offsets = ball_offsets(grid, radius);
    let need = (density * offsets.len() as f64 - 1e-9).ceil() as usize;
    for c in 0..n {
        let window: Vec<usize> = offsets.iter().map(|&o| offset_node(grid, c, o)).collect();
        let mut have = window.iter().filter(|&&i| mask[i]).count();
        while have < need {
            let free: Vec<usize> = window.iter().cloned().filter(|&i| !mask[i]).collect();
            let pick = *free.choose(&mut rng).expect("window has free nodes while under-filled");
            mask[pick] = true;
            have += 1;
        }
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub radius: f64,
    pub delta: f64,
    /// `min_x meas(omega cap B(x, R))` over grid centers.
    pub min_measure: f64,
    pub argmin: usize,
    pub passes: bool,
}

/// Slides the closed ball `B(x, R)` over every grid center.
pub fn verify_density(set: &ObservationSet, grid: &Grid, radius: f64, delta: f64) -> DensityReport {
    let offsets = ball_offsets(grid, radius);
    let mut best = usize::MAX;
    let mut argmin = 0;
    for c in 0..grid.node_count() {
        let count = offsets.iter().filter(|&&o| set.contains(offset_node(grid, c, o))).count();
        if count < best {
            best = count;
            argmin = c;
        }
    }
    let min_measure = best as f64 * grid.cell_volume();
    DensityReport { radius, delta, min_measure, argmin, passes: min_measure >= delta * (1.0 - 1e-12) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveringEstimate {
    pub order: f64,
    pub max_radius: f64,
    /// `sum r_j^n` of an explicit cover.
    pub upper_bound: f64,
    /// Radii of that cover.
    pub radii_used: Vec<f64>,
    pub lower_bound: f64,
    /// Dimensional factor already folded into `lower_bound` (1 for the exact 1-D scan).
    pub lower_factor: f64,
}

pub fn hausdorff_content(set: &ObservationSet, grid: &Grid, order: f64, max_radius: f64) -> Result<CoveringEstimate> {
    let d = grid.dim() as f64;
    if !(order > 0.0 && order <= d) {
        return Err(invalid("order", format!("content order must lie in (0, {d}], got {order}")));
    }
    let h = grid.spacing();
    if !(max_radius >= h) {
        return Err(invalid("max_radius", format!("must be at least the spacing {h}, got {max_radius}")));
    }
    let mut radii = Vec::new();
    let mut r = h;
    while r <= max_radius * (1.0 + 1e-12) {
        radii.push(r);
        r *= 2.0;
    }
    let (upper_bound, radii_used) = if grid.dim() == 1 {
        optimal_cover_1d(set, grid, &radii, order)
    } else {
        greedy_cover(set, grid, &radii, order)
    };
    let (lower_bound, lower_factor) = if grid.dim() == 1 {
        (mass_lower_bound_1d(set, grid, order), 1.0)
    } else {
        box_lower_bound(set, grid, order)
    };
    Ok(CoveringEstimate { order, max_radius, upper_bound, radii_used, lower_bound, lower_factor })
}

/// Exact minimum of `sum r_j^n` over covers of `E_h` by balls centered on nodes with
/// radii from `radii`. A ball of radius `h 2^m` covers a cell when the cell's node lies
/// within `2^m - 1` steps, i.e. it covers a run of `2^(m+1) - 1` consecutive nodes.
fn optimal_cover_1d(set: &ObservationSet, grid: &Grid, radii: &[f64], order: f64) -> (f64, Vec<f64>) {
    let n = grid.resolution();
    let pts = set.nodes();
    let p = pts.len();
    let spans: Vec<usize> = (0..radii.len()).map(|m| (1usize << (m + 1)) - 1).collect();
    let costs: Vec<f64> = radii.iter().map(|r| r.powf(order)).collect();

    // doubled positions for circular unrolling
    let pos: Vec<usize> = (0..2 * p).map(|t| pts[t % p] + if t >= p { n } else { 0 }).collect();
    // next[m][t]: first index after t not reached by a ball whose leftmost covered point is t
    let mut next = vec![vec![0usize; 2 * p]; radii.len()];
    for (m, span) in spans.iter().enumerate() {
        let mut j = 0;
        for t in 0..2 * p {
            j = j.max(t);
            while j < 2 * p && pos[j] <= pos[t] + span - 1 {
                j += 1;
            }
            next[m][t] = j;
        }
    }

    let mut best_total = f64::INFINITY;
    let mut best_plan = Vec::new();
    let mut best = vec![0.0; p + 1];
    let mut choice = vec![0usize; p];
    for s in 0..p {
        best[p] = 0.0;
        for t in (0..p).rev() {
            let mut b = f64::INFINITY;
            for m in 0..radii.len() {
                let nx = next[m][s + t].min(s + p) - s;
                let c = costs[m] + best[nx];
                if c < b {
                    b = c;
                    choice[t] = m;
                }
            }
            best[t] = b;
        }
        if best[0] < best_total {
            best_total = best[0];
            best_plan.clear();
            let mut t = 0;
            while t < p {
                let m = choice[t];
                best_plan.push(radii[m]);
                t = next[m][s + t].min(s + p) - s;
            }
        }
    }
    (best_total, best_plan)
}

/// Mixed-scale greedy: repeatedly place the ball that covers the most uncovered cells
/// per unit of `r^n`.
fn greedy_cover(set: &ObservationSet, grid: &Grid, radii: &[f64], order: f64) -> (f64, Vec<f64>) {
    let nn = grid.node_count();
    let half_diag = 0.5 * grid.spacing() * (grid.dim() as f64).sqrt();
    let balls: Vec<Vec<[usize; 2]>> = radii.iter().map(|r| ball_offsets(grid, r - half_diag)).collect();
    let costs: Vec<f64> = radii.iter().map(|r| r.powf(order)).collect();
    let mut counts = vec![vec![0i64; nn]; radii.len()];
    for &x in set.nodes() {
        for (m, ball) in balls.iter().enumerate() {
            for &o in ball {
                counts[m][offset_node(grid, x, o)] += 1;
            }
        }
    }
    let mut covered = vec![false; nn];
    let mut remaining = set.len();
    let mut total = 0.0;
    let mut used = Vec::new();
    let n = grid.resolution();
    while remaining > 0 {
        let mut pick = (0usize, 0usize);
        let mut score = 0.0;
        for m in 0..radii.len() {
            for c in 0..nn {
                let s = counts[m][c] as f64 / costs[m];
                if s > score {
                    score = s;
                    pick = (m, c);
                }
            }
        }
        let (m, c) = pick;
        total += costs[m];
        used.push(radii[m]);
        let [ci, cj] = grid.lattice_index(c);
        for &o in &balls[m] {
            // inverse offset: ball is symmetric, so c - o ranges over the same set
            let x = grid.node_at([ci + n - o[0] % n, cj + n - o[1] % n]);
            if set.contains(x) && !covered[x] {
                covered[x] = true;
                remaining -= 1;
                for (mm, ball) in balls.iter().enumerate() {
                    for &oo in ball {
                        counts[mm][offset_node(grid, x, oo)] -= 1;
                    }
                }
            }
        }
    }
    (total, used)
}

/// `1 / max_{i <= j} (count_ij / P) / ((x_j - x_i + h) / 2)^n` over cell-aligned
/// intervals. Among all intervals the ratio is maximized by cell-aligned ones because it
/// increases as an interval grows over a partially covered end cell.
fn mass_lower_bound_1d(set: &ObservationSet, grid: &Grid, order: f64) -> f64 {
    let n = grid.resolution();
    let h = grid.spacing();
    let pts = set.nodes();
    let p = pts.len();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for k in 0..p {
            let j = i + k;
            let end = pts[j % p] + if j >= p { n } else { 0 };
            let len = (end - pts[i] + 1) as f64 * h;
            let mass = (k + 1) as f64 / p as f64;
            worst = worst.max(mass / (len / 2.0).powf(order));
        }
    }
    1.0 / worst
}

/// Dyadic-box version of the mass distribution bound for 2-D: a ball of radius `rho`
/// meets at most `2^d` aligned boxes of side `s in [2 rho, 4 rho)` (3 per axis when the
/// boxes do not tile the torus evenly).
fn box_lower_bound(set: &ObservationSet, grid: &Grid, order: f64) -> (f64, f64) {
    let n = grid.resolution();
    let h = grid.spacing();
    let d = grid.dim() as i32;
    let p = set.len() as f64;
    let mut worst: f64 = 0.0;
    let mut m = 0;
    loop {
        let side = 1usize << m;
        let boxes = n.div_ceil(side);
        let per_axis: f64 = if n % side == 0 || boxes == 1 { 2.0 } else { 3.0 };
        let mut mass = vec![0usize; boxes.pow(d as u32)];
        for &x in set.nodes() {
            let [i, j] = grid.lattice_index(x);
            mass[i / side + boxes * (j / side)] += 1;
        }
        let heaviest = *mass.iter().max().unwrap() as f64 / p;
        let s = side as f64 * h;
        let factor = per_axis.powi(d) * 4f64.powf(order);
        worst = worst.max(factor * heaviest / s.powf(order));
        if side >= n {
            break;
        }
        m += 1;
    }
    (1.0 / worst, 2f64.powi(d) * 4f64.powf(order))
}
