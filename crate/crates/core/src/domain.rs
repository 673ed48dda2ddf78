//! Box domains, grid search with lexicographic tie-breaking, local
//! coordinate refinement and the offline constrained oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("domain", "dimension must be at least 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(
                    "domain",
                    "every axis needs finite lower < upper",
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn clamp_axis(&self, axis: usize, v: f64) -> f64 {
        v.max(self.lower[axis]).min(self.upper[axis])
    }
}

/// Points per axis and the number of refinement sweeps (0 disables it).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub resolution: usize,
    pub refine_steps: usize,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid("grid", "resolution must be at least 2"));
        }
        Ok(Self {
            resolution,
            refine_steps: 0,
        })
    }

    pub fn with_refinement(mut self, sweeps: usize) -> Self {
        self.refine_steps = sweeps;
        self
    }

    pub fn len(&self, dim: usize) -> usize {
        self.resolution.pow(dim as u32)
    }
}

/// Coordinates of grid point `index`; the first axis varies slowest so that
/// index order is lexicographic order.
pub fn grid_point_into(domain: &BoxDomain, resolution: usize, mut index: usize, out: &mut [f64]) {
    let d = domain.dim();
    for axis in (0..d).rev() {
        let k = index % resolution;
        index /= resolution;
        out[axis] = axis_value(domain, resolution, axis, k);
    }
}

#[inline]
fn axis_value(domain: &BoxDomain, resolution: usize, axis: usize, k: usize) -> f64 {
    if k + 1 == resolution {
        domain.upper[axis]
    } else {
        let step = domain.width(axis) / (resolution - 1) as f64;
        domain.lower[axis] + k as f64 * step
    }
}

/// Materialised grid, used by the policy for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: BoxDomain,
    spec: GridSpec,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(domain: &BoxDomain, spec: GridSpec) -> Result<Self> {
        GridSpec::new(spec.resolution)?;
        let d = domain.dim();
        let n = spec.len(d);
        let mut points = vec![0.0; n * d];
        for (i, chunk) in points.chunks_mut(d).enumerate() {
            grid_point_into(domain, spec.resolution, i, chunk);
        }
        Ok(Self {
            domain: domain.clone(),
            spec,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.domain.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.domain.width(a) / (self.spec.resolution - 1) as f64)
            .collect()
    }
}

/// Running maximum with lowest-index tie-breaking. Merging partial results
/// from any partition of the index range gives the same answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Best {
    pub index: usize,
    pub value: f64,
}

impl Best {
    pub fn merge(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.value > a.value || (b.value == a.value && b.index < a.index) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }
}

/// Index of the largest value, lowest index on ties. A non-finite value is
/// reported through `Err(index)`.
pub fn argmax_index<I>(values: I) -> core::result::Result<Option<Best>, usize>
where
    I: IntoIterator<Item = f64>,
{
    let mut best: Option<Best> = None;
    for (index, value) in values.into_iter().enumerate() {
        if !value.is_finite() {
            return Err(index);
        }
        match best {
            Some(b) if value <= b.value => {}
            _ => best = Some(Best { index, value }),
        }
    }
    Ok(best)
}

/// Result of a local refinement run; `trajectory` lists the objective after
/// every accepted move, starting with the initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub point: Vec<f64>,
    pub value: f64,
    pub trajectory: Vec<f64>,
}

/// Coordinate search: try `+-step` on every axis, accept strict improvements
/// that pass `accept`, halve the steps when a sweep makes no progress, stop
/// once every step is below `1e-4` of its axis width or after `max_sweeps`.
pub fn refine<F, A>(
    mut objective: F,
    mut accept: A,
    domain: &BoxDomain,
    start: Vec<f64>,
    start_value: f64,
    initial_step: &[f64],
    max_sweeps: usize,
) -> Refinement
where
    F: FnMut(&[f64]) -> f64,
    A: FnMut(&[f64]) -> bool,
{
    let d = domain.dim();
    let mut x = start;
    let mut value = start_value;
    let mut step: Vec<f64> = initial_step.to_vec();
    let floor: Vec<f64> = (0..d).map(|a| 1e-4 * domain.width(a)).collect();
    let mut trajectory = vec![value];
    let mut cand = x.clone();
    for _ in 0..max_sweeps {
        let mut moved = false;
        for axis in 0..d {
            for dir in [1.0, -1.0] {
                cand.copy_from_slice(&x);
                cand[axis] = domain.clamp_axis(axis, x[axis] + dir * step[axis]);
                if cand[axis] == x[axis] {
                    continue;
                }
                let v = objective(&cand);
                if v.is_finite() && v > value && accept(&cand) {
                    x.copy_from_slice(&cand);
                    value = v;
                    trajectory.push(v);
                    moved = true;
                }
            }
        }
        if !moved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
            if step.iter().zip(&floor).all(|(s, f)| s < f) {
                break;
            }
        }
    }
    Refinement {
        point: x,
        value,
        trajectory,
    }
}

/// Maximises `objective` over the grid (lowest lexicographic index on ties),
/// then optionally refines locally.
pub fn grid_argmax<F>(mut objective: F, domain: &BoxDomain, grid: &GridSpec) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    GridSpec::new(grid.resolution)?;
    let d = domain.dim();
    let n = grid.len(d);
    let mut x = vec![0.0; d];
    let mut best: Option<Best> = None;
    for index in 0..n {
        grid_point_into(domain, grid.resolution, index, &mut x);
        let value = objective(&x);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { index, point: x });
        }
        best = Best::merge(best, Some(Best { index, value }));
    }
    let best = best.ok_or(Error::EmptyCandidates)?;
    grid_point_into(domain, grid.resolution, best.index, &mut x);
    if grid.refine_steps == 0 {
        return Ok(x);
    }
    let step: Vec<f64> = (0..d)
        .map(|a| 0.5 * domain.width(a) / (grid.resolution - 1) as f64)
        .collect();
    Ok(refine(
        objective,
        |_| true,
        domain,
        x,
        best.value,
        &step,
        grid.refine_steps,
    )
    .point)
}

/// Best feasible point of `max f(x) s.t. g(x) <= 0` over the grid, with
/// optional feasibility-preserving refinement. Returns `(x*, f(x*))`.
pub fn constrained_oracle<F, G>(
    mut f: F,
    mut g: G,
    domain: &BoxDomain,
    grid: &GridSpec,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> f64,
{
    GridSpec::new(grid.resolution)?;
    let d = domain.dim();
    let n = grid.len(d);
    let mut x = vec![0.0; d];
    let mut best: Option<Best> = None;
    for index in 0..n {
        grid_point_into(domain, grid.resolution, index, &mut x);
        if !(g(&x) <= 0.0) {
            continue;
        }
        let value = f(&x);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { index, point: x });
        }
        best = Best::merge(best, Some(Best { index, value }));
    }
    let best = best.ok_or(Error::Infeasible)?;
    grid_point_into(domain, grid.resolution, best.index, &mut x);
    if grid.refine_steps == 0 {
        return Ok((x, best.value));
    }
    let step: Vec<f64> = (0..d)
        .map(|a| 0.5 * domain.width(a) / (grid.resolution - 1) as f64)
        .collect();
    let r = refine(
        &mut f,
        |c| g(c) <= 0.0,
        domain,
        x,
        best.value,
        &step,
        grid.refine_steps,
    );
    Ok((r.point, r.value))
}
