//! The variable change `psi = sqrt(rho) exp(i S / hbar)` and its diagnostics.

use std::collections::VecDeque;

use num_complex::Complex;
use serde::Serialize;

use crate::diff;
use crate::domain::{ComponentGauge, MadelungFields, SystemParams, WaveField};
use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};
use crate::spectral::SpectralPlan;

/// Default support cutoff relative to the maximum density.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-10;

/// Splits a wave function into density and action with the default threshold.
pub fn decompose<T: Real>(psi: &WaveField<T>, params: &SystemParams<T>) -> Result<MadelungFields<T>> {
    decompose_with(psi, params, T::lit(DEFAULT_RELATIVE_THRESHOLD))
}

/// Splits a wave function into density and action.
///
/// The phase is unwrapped by a breadth-first flood fill over supported nodes,
/// seeded at the density maximum of each connected component. Edges that
/// still jump by more than `pi` afterwards mark phase defects; their nodes are
/// dropped from the support.
pub fn decompose_with<T: Real>(
    psi: &WaveField<T>,
    params: &SystemParams<T>,
    relative_threshold: T,
) -> Result<MadelungFields<T>> {
    params.require_quantum()?;
    let grid = &psi.grid;
    let n = grid.len();
    let rho: Vec<T> = psi.values.iter().map(|z| z.norm_sqr()).collect();
    let principal: Vec<T> = psi.values.iter().map(|z| z.arg()).collect();
    let max = rho.iter().fold(T::zero(), |m, &r| m.max(r));
    let threshold = relative_threshold * max;
    let mut support: Vec<bool> = rho.iter().map(|&r| r > threshold).collect();

    let mut order: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
    order.sort_by(|&a, &b| rho[b].partial_cmp(&rho[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));

    let mut unwrapped = principal.clone();
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for &seed in &order {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        let mut count = 0;
        while let Some(cur) = queue.pop_front() {
            count += 1;
            for axis in 0..grid.dim() {
                for off in [-1isize, 1] {
                    let Some(nb) = grid.neighbor_open(cur, axis, off) else { continue };
                    if !support[nb] || visited[nb] {
                        continue;
                    }
                    visited[nb] = true;
                    unwrapped[nb] = unwrapped[cur] + wrap_angle(principal[nb] - unwrapped[cur]);
                    queue.push_back(nb);
                }
            }
        }
        components.push(ComponentGauge {
            seed,
            offset: params.hbar * principal[seed],
            nodes: count,
        });
    }

    let mut defect = vec![false; n];
    for i in 0..n {
        if !support[i] {
            continue;
        }
        for axis in 0..grid.dim() {
            if let Some(nb) = grid.neighbor_open(i, axis, 1) {
                if support[nb] && (unwrapped[nb] - unwrapped[i]).abs() > T::PI() {
                    defect[i] = true;
                    defect[nb] = true;
                }
            }
        }
    }
    let defects = defect.iter().filter(|&&d| d).count();
    for (s, d) in support.iter_mut().zip(&defect) {
        *s = *s && !*d;
    }

    let action = unwrapped.iter().map(|&p| params.hbar * p).collect();
    Ok(MadelungFields {
        grid: grid.clone(),
        time: psi.time,
        rho,
        action,
        support,
        mass_threshold: threshold,
        components,
        defects,
    })
}

/// Rebuilds `sqrt(rho) exp(i S / hbar)`.
pub fn recompose<T: Real>(fields: &MadelungFields<T>, params: &SystemParams<T>) -> WaveField<T> {
    WaveField {
        grid: fields.grid.clone(),
        time: fields.time,
        values: fields
            .rho
            .iter()
            .zip(&fields.action)
            .map(|(&r, &s)| Complex::from_polar(r.max(T::zero()).sqrt(), s / params.hbar))
            .collect(),
    }
}

fn median<T: Real>(mut xs: Vec<T>) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(xs[xs.len() / 2])
}

/// Shifts `fields.action` by the multiple of `2 pi hbar` that best matches
/// `reference` (median over the common support). Returns the number of turns removed.
pub fn align_gauge<T: Real>(fields: &mut MadelungFields<T>, reference: &MadelungFields<T>, hbar: T) -> i64 {
    let period = (T::PI() + T::PI()) * hbar;
    let diffs = (0..fields.rho.len())
        .filter(|&i| fields.support[i] && reference.support[i])
        .map(|i| fields.action[i] - reference.action[i])
        .collect();
    let Some(m) = median(diffs) else { return 0 };
    let turns = (m / period).round();
    if turns != T::zero() {
        let shift = turns * period;
        fields.action.iter_mut().for_each(|s| *s = *s - shift);
    }
    turns.to_i64().unwrap_or(0)
}

/// Decomposes a time series, aligning each snapshot's gauge with the previous one.
pub fn decompose_series<T: Real>(
    snapshots: &[WaveField<T>],
    params: &SystemParams<T>,
    relative_threshold: T,
) -> Result<Vec<MadelungFields<T>>> {
    let mut tracker = GaugeTracker::new(relative_threshold);
    snapshots.iter().map(|psi| tracker.decompose(psi, params)).collect()
}

/// Streaming form of [`decompose_series`]: keeps only the previous snapshot.
///
/// An anchored tracker aligns its first snapshot with a reference (typically
/// the exact initial action), which fixes the absolute `2 pi hbar` gauge for
/// the whole series.
#[derive(Clone, Debug)]
pub struct GaugeTracker<T> {
    previous: Option<MadelungFields<T>>,
    relative_threshold: T,
    /// Net whole turns removed so far.
    pub turns: i64,
}

impl<T: Real> GaugeTracker<T> {
    pub fn new(relative_threshold: T) -> Self {
        GaugeTracker {
            previous: None,
            relative_threshold,
            turns: 0,
        }
    }

    pub fn anchored(reference: MadelungFields<T>, relative_threshold: T) -> Self {
        GaugeTracker {
            previous: Some(reference),
            relative_threshold,
            turns: 0,
        }
    }

    pub fn decompose(&mut self, psi: &WaveField<T>, params: &SystemParams<T>) -> Result<MadelungFields<T>> {
        let mut f = decompose_with(psi, params, self.relative_threshold)?;
        if let Some(prev) = &self.previous {
            self.turns += align_gauge(&mut f, prev, params.hbar);
        }
        self.previous = Some(f.clone());
        Ok(f)
    }
}

/// Node-valued scalar with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedField<T> {
    pub values: Vec<T>,
    pub valid: Vec<bool>,
}

/// `Q = -(hbar^2 / 2m) lap(sqrt rho) / sqrt rho` with a spectral Laplacian,
/// masked outside the support.
pub fn quantum_potential<T: Real>(fields: &MadelungFields<T>, params: &SystemParams<T>) -> MaskedField<T> {
    let plan = SpectralPlan::new(&fields.grid);
    quantum_potential_with(&plan, fields, params)
}

fn quantum_potential_with<T: Real>(
    plan: &SpectralPlan<T>,
    fields: &MadelungFields<T>,
    params: &SystemParams<T>,
) -> MaskedField<T> {
    let amp: Vec<T> = fields.rho.iter().map(|r| r.max(T::zero()).sqrt()).collect();
    let lap = plan.laplacian(&amp);
    let scale = -params.hbar * params.hbar / (T::lit(2.0) * params.mass);
    let values = lap
        .iter()
        .zip(&amp)
        .zip(&fields.support)
        .map(|((l, a), &s)| if s { scale * *l / *a } else { T::zero() })
        .collect();
    MaskedField {
        values,
        valid: fields.support.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport<T> {
    /// `sqrt(sum r^2 dV)` of the quantum Hamilton-Jacobi residual over the support.
    pub hj_residual_l2: T,
    pub continuity_residual_l2: T,
    /// `sum rho r^2 dV` with the quantum potential included.
    pub lsq_functional: T,
    /// The same functional with the quantum potential left out.
    pub lsq_functional_without_q: T,
    pub mass_threshold: T,
    pub supported_nodes: usize,
    /// Whole-field `2 pi hbar` turns removed from the previous and next snapshots.
    pub gauge_corrections: [i64; 2],
    /// Nodes whose time difference needed an individual `2 pi hbar` correction.
    pub slip_corrections: usize,
}

/// Madelung-equation residuals at the middle of three equally spaced snapshots.
pub fn residuals<T: Real>(
    prev: &MadelungFields<T>,
    center: &MadelungFields<T>,
    next: &MadelungFields<T>,
    params: &SystemParams<T>,
) -> Result<ResidualReport<T>> {
    params.require_quantum()?;
    if prev.grid != center.grid || next.grid != center.grid {
        return Err(Error::param("fields", "snapshots live on different grids"));
    }
    let dt = center.time - prev.time;
    let dt2 = next.time - center.time;
    if !(dt > T::zero()) || (dt2 - dt).abs() > T::lit(1e-9) * dt.abs().max(T::one()) {
        return Err(Error::param("fields", "snapshot times must be increasing and equally spaced"));
    }
    let grid = &center.grid;
    let (m, hbar) = (params.mass, params.hbar);
    let period = (T::PI() + T::PI()) * hbar;

    let mut prev = prev.clone();
    let mut next = next.clone();
    let gauge_corrections = [align_gauge(&mut prev, center, hbar), align_gauge(&mut next, center, hbar)];

    let in_support = |i: usize| center.support[i] && prev.support[i] && next.support[i];
    let raw_dt: Vec<T> = (0..grid.len()).map(|i| next.action[i] - prev.action[i]).collect();
    let typical = median((0..grid.len()).filter(|&i| in_support(i)).map(|i| raw_dt[i]).collect()).unwrap_or(T::zero());
    let mut slip_corrections = 0;
    let two_dt = dt + dt2;
    let ds_dt: Vec<T> = raw_dt
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let turns = ((d - typical) / period).round();
            if in_support(i) && turns != T::zero() {
                slip_corrections += 1;
            }
            (d - turns * period) / two_dt
        })
        .collect();

    let grad_s = diff::gradient_wrapped(grid, &center.action, period);
    let potential = params.potential.values_on(grid, m);
    let plan = SpectralPlan::new(grid);
    let q = quantum_potential_with(&plan, center, params);
    let flux: Vec<_> = grad_s
        .iter()
        .zip(&center.rho)
        .map(|(g, &r)| [r * g[0] / m, r * g[1] / m, r * g[2] / m])
        .collect();
    let div = diff::divergence(grid, &flux);

    let vol = grid.cell_volume();
    let half = T::lit(0.5);
    let (mut hj2, mut c2, mut lsq, mut lsq_noq) = (T::zero(), T::zero(), T::zero(), T::zero());
    let mut supported = 0;
    for i in (0..grid.len()).filter(|&i| in_support(i)) {
        supported += 1;
        let g = &grad_s[i];
        let kinetic = half * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) / m;
        let classical = ds_dt[i] + kinetic + potential[i];
        let r = classical + q.values[i];
        let c = (next.rho[i] - prev.rho[i]) / two_dt + div[i];
        hj2 = hj2 + r * r;
        c2 = c2 + c * c;
        lsq = lsq + center.rho[i] * r * r;
        lsq_noq = lsq_noq + center.rho[i] * classical * classical;
    }
    Ok(ResidualReport {
        hj_residual_l2: (hj2 * vol).sqrt(),
        continuity_residual_l2: (c2 * vol).sqrt(),
        lsq_functional: lsq * vol,
        lsq_functional_without_q: lsq_noq * vol,
        mass_threshold: center.mass_threshold,
        supported_nodes: supported,
        gauge_corrections,
        slip_corrections,
    })
}
