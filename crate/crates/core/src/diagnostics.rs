//! Measurements on Wigner fields: normalization, negativity, zero lines,
//! singularity census, field comparison and the streamline sign audit.

use crate::dynamics::{velocity_divergence, PolynomialPotential};
use crate::error::{Result, WflowError};
use crate::evolve::{integrate_flow, BlowupReason, PhaseFlow, QuantumFlow};
use crate::grid::{integrate, DerivativeScheme, PhaseGrid, ScalarField};
use crate::states::WignerState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

/// Relative threshold of [`compare_fields`]' sign test.
pub const SIGN_THRESHOLD_REL: f64 = 1e-4;
/// Values within this fraction of `max|W|` of the contour level count as
/// above it, so that the truncation noise of tails cut off by the grid edge
/// (about `1e-8 · max|W|` on the default grid) does not seed spurious contours.
pub const CONTOUR_NOISE_FLOOR_REL: f64 = 1e-7;

/// `∬ (|W| − W)/2 dx dp`.
pub fn negativity_volume(field: &ScalarField) -> f64 {
    let g = field.grid();
    let sum: f64 = field.values().iter().map(|&w| 0.5 * (w.abs() - w)).sum();
    sum * g.dx() * g.dp()
}

/// A contour polyline in physical coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Edge key: horizontal edges (along x) and vertical edges (along p).
fn edge_id(np: usize, nx: usize, horizontal: bool, i: usize, j: usize) -> usize {
    let base = if horizontal { 0 } else { nx * np };
    base + i * np + j
}

/// Level set of `field` by marching squares with linear interpolation on the
/// edges. Saddle cells are resolved with the cell-centre average.
pub fn zero_contours(field: &ScalarField, level: f64) -> Vec<Polyline> {
    let g = field.grid();
    let (nx, np) = g.shape();
    let v = field.values();
    let floor = CONTOUR_NOISE_FLOOR_REL * field.max_abs();
    let above = |x: f64| x - level >= -floor;
    let mut points: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();

    let crossing = |a: (usize, usize), b: (usize, usize)| -> (f64, f64) {
        let va = v[a] - level;
        let vb = v[b] - level;
        let t = if va == vb { 0.5 } else { va / (va - vb) };
        let xa = (g.x(a.0), g.p(a.1));
        let xb = (g.x(b.0), g.p(b.1));
        (xa.0 + t * (xb.0 - xa.0), xa.1 + t * (xb.1 - xa.1))
    };

    for i in 0..nx - 1 {
        for j in 0..np - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let code = corners
                .iter()
                .enumerate()
                .fold(0u8, |c, (n, &k)| c | ((above(v[k]) as u8) << n));
            if code == 0 || code == 15 {
                continue;
            }
            // edges: 0 bottom (p = j), 1 right (x = i+1), 2 top (p = j+1), 3 left (x = i)
            let edges = [
                (edge_id(np, nx, true, i, j), corners[0], corners[1]),
                (edge_id(np, nx, false, i + 1, j), corners[1], corners[2]),
                (edge_id(np, nx, true, i, j + 1), corners[3], corners[2]),
                (edge_id(np, nx, false, i, j), corners[0], corners[3]),
            ];
            let cut: Vec<usize> = (0..4)
                .filter(|&e| above(v[edges[e].1]) != above(v[edges[e].2]))
                .collect();
            for &e in &cut {
                let (id, a, b) = edges[e];
                points.entry(id).or_insert_with(|| crossing(a, b));
            }
            let id = |e: usize| edges[e].0;
            match cut.len() {
                2 => segments.push((id(cut[0]), id(cut[1]))),
                4 => {
                    let centre = corners.iter().map(|&k| v[k]).sum::<f64>() / 4.0;
                    // corner 0 above: code 5, or corner 1 above: code 10
                    let centre_matches_corner0 = above(centre) == above(v[corners[0]]);
                    if centre_matches_corner0 {
                        segments.push((id(0), id(1)));
                        segments.push((id(2), id(3)));
                    } else {
                        segments.push((id(3), id(0)));
                        segments.push((id(1), id(2)));
                    }
                }
                _ => {}
            }
        }
    }
    link_segments(&segments, &points)
}

fn link_segments(segments: &[(usize, usize)], points: &HashMap<usize, (f64, f64)>) -> Vec<Polyline> {
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(s);
        adjacency.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let other = |s: usize, node: usize| {
        let (a, b) = segments[s];
        if a == node {
            b
        } else {
            a
        }
    };
    let walk = |start: usize, first: usize, used: &mut Vec<bool>| -> Vec<usize> {
        let mut chain = vec![start];
        let mut node = start;
        let mut seg = Some(first);
        while let Some(s) = seg {
            used[s] = true;
            node = other(s, node);
            chain.push(node);
            seg = adjacency[&node].iter().copied().find(|&t| !used[t]);
        }
        chain
    };
    // Open chains start at nodes of degree one, so handle those first.
    let mut starts: Vec<usize> = adjacency
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&n, _)| n)
        .collect();
    starts.sort_unstable();
    for node in starts {
        let first = adjacency[&node][0];
        if used[first] {
            continue;
        }
        let chain = walk(node, first, &mut used);
        lines.push(Polyline {
            points: chain.iter().map(|n| points[n]).collect(),
            closed: false,
        });
    }
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let start = segments[s].0;
        let chain = walk(start, s, &mut used);
        let closed = chain.first() == chain.last();
        lines.push(Polyline {
            points: chain.iter().map(|n| points[n]).collect(),
            closed,
        });
    }
    lines
}

/// Contours as CSV with header `contour,closed,x,p`.
pub fn write_contours_csv<W: Write>(contours: &[Polyline], mut out: W) -> Result<()> {
    writeln!(out, "contour,closed,x,p")?;
    for (c, line) in contours.iter().enumerate() {
        for &(x, p) in &line.points {
            writeln!(out, "{c},{},{x},{p}", line.closed as u8)?;
        }
    }
    Ok(())
}

/// One decade of the `|∇·w|` histogram: `[10^lo_exp, 10^(lo_exp+1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_exp: i32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityCensus {
    pub singular_fraction: f64,
    pub max_divergence: f64,
    /// Decade histogram of `|∇·w|` on unmasked nodes; values below `1e-12`
    /// fall into the lowest bin.
    pub histogram: Vec<HistogramBin>,
}

const HIST_LO: i32 = -12;
const HIST_HI: i32 = 12;

pub fn singularity_census(
    state: &WignerState,
    potential: &PolynomialPotential,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
) -> Result<SingularityCensus> {
    let div = velocity_divergence(state, potential, epsilon_rel, scheme)?;
    let total = div.values().len();
    let mut counts = vec![0usize; (HIST_HI - HIST_LO) as usize];
    let mut max_div = 0.0f64;
    for ((i, j), &d) in div.values().indexed_iter() {
        if div.is_masked(i, j) {
            continue;
        }
        let a = d.abs();
        max_div = max_div.max(a);
        let e = if a > 0.0 { a.log10().floor() as i32 } else { HIST_LO };
        let bin = (e.clamp(HIST_LO, HIST_HI - 1) - HIST_LO) as usize;
        counts[bin] += 1;
    }
    Ok(SingularityCensus {
        singular_fraction: div.masked_count() as f64 / total as f64,
        max_divergence: max_div,
        histogram: counts
            .into_iter()
            .enumerate()
            .map(|(b, count)| HistogramBin {
                lo_exp: HIST_LO + b as i32,
                count,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    /// `(∬ (a − b)² dx dp)^{1/2}`.
    pub l2: f64,
    pub linf: f64,
    /// Area where `a` and `b` have opposite signs and both exceed
    /// `1e-4 · max(max|a|, max|b|)` in magnitude.
    pub sign_disagreement_area: f64,
}

pub fn compare_fields(a: &ScalarField, b: &ScalarField) -> Result<FieldComparison> {
    a.grid().ensure_same(b.grid())?;
    let g = a.grid();
    let cell = g.dx() * g.dp();
    let threshold = SIGN_THRESHOLD_REL * a.max_abs().max(b.max_abs());
    let mut sq = 0.0;
    let mut linf = 0.0f64;
    let mut disagree = 0usize;
    for (&u, &v) in a.values().iter().zip(b.values().iter()) {
        let d = u - v;
        sq += d * d;
        linf = linf.max(d.abs());
        if u.abs() > threshold && v.abs() > threshold && (u > 0.0) != (v > 0.0) {
            disagree += 1;
        }
    }
    Ok(FieldComparison {
        l2: (sq * cell).sqrt(),
        linf,
        sign_disagreement_area: disagree as f64 * cell,
    })
}

/// Audit of one seed. `sign_changed` is `None` when the seed is singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seed: (f64, f64),
    pub blowup: bool,
    pub reason: Option<String>,
    pub sign_changed: Option<bool>,
    pub exited_domain: bool,
    pub blowup_point: Option<(f64, f64)>,
    pub steps: usize,
}

impl AuditEntry {
    /// A sign change along a streamline whose `∇·w` stayed bounded.
    pub fn is_violation(&self) -> bool {
        self.sign_changed == Some(true) && !self.blowup
    }
}

fn reason_label(r: BlowupReason) -> &'static str {
    match r {
        BlowupReason::StartMasked => "start_masked",
        BlowupReason::Singular => "singular",
        BlowupReason::ZeroCrossing => "zero_crossing",
        BlowupReason::ExponentGuard => "exponent_guard",
    }
}

/// Runs one streamline per seed through `flow` up to time `t`.
pub fn audit_flow<F: PhaseFlow + Sync>(flow: &F, seeds: &[(f64, f64)], t: f64, dt: f64) -> Result<Vec<AuditEntry>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let line = integrate_flow(flow, seed, t, dt)?;
            Ok(AuditEntry {
                seed,
                blowup: line.blowup(),
                reason: line.blowup.map(|r| reason_label(r).to_string()),
                sign_changed: line.sign_changed(),
                exited_domain: line.exited_domain,
                blowup_point: line.blowup_point,
                steps: line.times.len() - 1,
            })
        })
        .collect()
}

/// Streamline sign audit of `state` in the frozen velocity field `w = J/W`.
pub fn streamline_sign_audit(
    state: &WignerState,
    potential: &PolynomialPotential,
    seeds: &[(f64, f64)],
    t: f64,
    dt: f64,
    epsilon_rel: f64,
    scheme: DerivativeScheme,
) -> Result<Vec<AuditEntry>> {
    let flow = QuantumFlow::new(state, potential, epsilon_rel, scheme)?;
    audit_flow(&flow, seeds, t, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditSummary {
    pub seeds: usize,
    pub blowups: usize,
    pub sign_changes: usize,
    pub sign_change_with_blowup: usize,
    pub violations: usize,
    pub no_verdict: usize,
}

impl AuditSummary {
    pub fn of(entries: &[AuditEntry]) -> Self {
        let mut s = Self {
            seeds: entries.len(),
            ..Self::default()
        };
        for e in entries {
            s.blowups += e.blowup as usize;
            match e.sign_changed {
                None => s.no_verdict += 1,
                Some(true) => {
                    s.sign_changes += 1;
                    if e.blowup {
                        s.sign_change_with_blowup += 1;
                    } else {
                        s.violations += 1;
                    }
                }
                Some(false) => {}
            }
        }
        s
    }
}

/// `n × n` seeds evenly spaced over the closed box, corners included.
pub fn seed_lattice(x_range: (f64, f64), p_range: (f64, f64), n: usize) -> Vec<(f64, f64)> {
    let at = |(lo, hi): (f64, f64), k: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (at(x_range, i), at(p_range, j))))
        .collect()
}

/// Summary measurements of one field, optionally against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub normalization: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub negativity_volume: f64,
    pub zero_line_count: usize,
    pub singular_fraction: f64,
    pub max_velocity_divergence: Option<f64>,
    pub error_l2: Option<f64>,
    pub error_linf: Option<f64>,
    pub sign_disagreement_area: Option<f64>,
}

impl DiagnosticsReport {
    /// Field-only measurements; the singular fraction uses the field's own mask.
    pub fn of_field(field: &ScalarField) -> Self {
        Self {
            normalization: integrate(field),
            min_value: field.min_value(),
            max_value: field.max_value(),
            negativity_volume: negativity_volume(field),
            zero_line_count: zero_contours(field, 0.0).len(),
            singular_fraction: field.masked_count() as f64 / field.values().len() as f64,
            max_velocity_divergence: None,
            error_l2: None,
            error_linf: None,
            sign_disagreement_area: None,
        }
    }

    /// Adds the singularity census of `w = J/W` in `potential`.
    pub fn with_census(mut self, census: &SingularityCensus) -> Self {
        self.singular_fraction = census.singular_fraction;
        self.max_velocity_divergence = Some(census.max_divergence);
        self
    }

    pub fn with_comparison(mut self, cmp: &FieldComparison) -> Self {
        self.error_l2 = Some(cmp.l2);
        self.error_linf = Some(cmp.linf);
        self.sign_disagreement_area = Some(cmp.sign_disagreement_area);
        self
    }

    /// Flat `key=value` lines; absent optional entries are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("normalization", self.normalization.to_string());
        put("min_value", self.min_value.to_string());
        put("max_value", self.max_value.to_string());
        put("negativity_volume", self.negativity_volume.to_string());
        put("zero_line_count", self.zero_line_count.to_string());
        put("singular_fraction", self.singular_fraction.to_string());
        for (k, v) in [
            ("max_velocity_divergence", self.max_velocity_divergence),
            ("error_l2", self.error_l2),
            ("error_linf", self.error_linf),
            ("sign_disagreement_area", self.sign_disagreement_area),
        ] {
            if let Some(v) = v {
                put(k, v.to_string());
            }
        }
        out
    }

    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| WflowError::Parse(format!("expected key=value, got '{line}'")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |k: &str| -> Result<Option<f64>> {
            map.get(k)
                .map(|v| v.parse::<f64>().map_err(|e| WflowError::Parse(format!("{k}: {e}"))))
                .transpose()
        };
        let need = |k: &str| -> Result<f64> { num(k)?.ok_or_else(|| WflowError::Parse(format!("missing key '{k}'"))) };
        Ok(Self {
            normalization: need("normalization")?,
            min_value: need("min_value")?,
            max_value: need("max_value")?,
            negativity_volume: need("negativity_volume")?,
            zero_line_count: need("zero_line_count")? as usize,
            singular_fraction: need("singular_fraction")?,
            max_velocity_divergence: num("max_velocity_divergence")?,
            error_l2: num("error_l2")?,
            error_linf: num("error_linf")?,
            sign_disagreement_area: num("sign_disagreement_area")?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Grid nodes whose signs differ between `a` and `b` above the comparison
/// threshold; used to locate wrong-sector negativity.
pub fn sign_disagreement_mask(a: &ScalarField, b: &ScalarField) -> Result<ndarray::Array2<bool>> {
    a.grid().ensure_same(b.grid())?;
    let threshold = SIGN_THRESHOLD_REL * a.max_abs().max(b.max_abs());
    Ok(ndarray::Zip::from(a.values())
        .and(b.values())
        .map_collect(|&u, &v| u.abs() > threshold && v.abs() > threshold && (u > 0.0) != (v > 0.0)))
}

/// Strict local maxima (against the eight neighbours) with value above
/// `floor`, as `(x, p, value)`.
pub fn local_maxima(field: &ScalarField, floor: f64) -> Vec<(f64, f64, f64)> {
    let g: &PhaseGrid = field.grid();
    let v = field.values();
    let (nx, np) = g.shape();
    let mut out = Vec::new();
    for i in 1..nx - 1 {
        for j in 1..np - 1 {
            let c = v[[i, j]];
            if c <= floor {
                continue;
            }
            let mut is_max = true;
            'n: for di in [-1isize, 0, 1] {
                for dj in [-1isize, 0, 1] {
                    if (di, dj) != (0, 0) && v[[(i as isize + di) as usize, (j as isize + dj) as usize]] >= c {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push((g.x(i), g.p(j), c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{gaussian_ground_state, SystemParams};

    fn fock1(grid: PhaseGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x, p| {
            let r2 = x * x + p * p;
            (2.0 * r2 - 1.0) * (-r2).exp() / std::f64::consts::PI
        })
    }

    #[test]
    fn gaussian_has_no_negativity_or_contours() {
        let g = PhaseGrid::default_grid();
        let w = gaussian_ground_state(&g, SystemParams::natural()).unwrap();
        assert!(negativity_volume(&w.field) < 1e-10);
        assert!(zero_contours(&w.field, 0.0).is_empty());
    }

    #[test]
    fn fock_ring_is_one_closed_contour() {
        let g = PhaseGrid::default_grid();
        let c = zero_contours(&fock1(g), 0.0);
        assert_eq!(c.len(), 1);
        assert!(c[0].closed);
        let r0 = 0.5f64.sqrt();
        let mean: f64 = c[0]
            .points
            .iter()
            .map(|(x, p)| ((x * x + p * p).sqrt() - r0).abs())
            .sum::<f64>()
            / c[0].len() as f64;
        assert!(mean < g.dx(), "{mean}");
    }

    #[test]
    fn open_contour_on_a_half_plane() {
        let g = PhaseGrid::square(1.0, 16).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x - 0.03);
        let c = zero_contours(&f, 0.0);
        assert_eq!(c.len(), 1);
        assert!(!c[0].closed);
        assert_eq!(c[0].len(), 16);
        assert!(c[0].points.iter().all(|(x, _)| (x - 0.03).abs() < 1e-12));
    }

    #[test]
    fn compare_identical_and_symmetric() {
        let g = PhaseGrid::default_grid();
        let a = fock1(g);
        let b = a.map(|v| v * 0.9 + 1e-3);
        let z = compare_fields(&a, &a).unwrap();
        assert_eq!((z.l2, z.linf, z.sign_disagreement_area), (0.0, 0.0, 0.0));
        let ab = compare_fields(&a, &b).unwrap();
        let ba = compare_fields(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let flipped = compare_fields(&a, &a.map(|v| -v)).unwrap();
        assert!(flipped.sign_disagreement_area > 30.0);
    }

    #[test]
    fn report_key_value_round_trip() {
        let g = PhaseGrid::default_grid();
        let f = fock1(g);
        let r = DiagnosticsReport::of_field(&f).with_comparison(&compare_fields(&f, &f.map(|v| v * 1.01)).unwrap());
        let back = DiagnosticsReport::from_key_value(&r.to_key_value()).unwrap();
        assert_eq!(r, back);
        assert!(r.to_json().contains("\"negativity_volume\""));
        assert_eq!(r.zero_line_count, 1);
    }

    #[test]
    fn lattice_covers_corners() {
        let s = seed_lattice((-3.0, 3.0), (-2.0, 2.0), 20);
        assert_eq!(s.len(), 400);
        assert_eq!(s[0], (-3.0, -2.0));
        assert_eq!(s[399], (3.0, 2.0));
    }

    #[test]
    fn summary_counts() {
        let e = |blowup, sign| AuditEntry {
            seed: (0.0, 0.0),
            blowup,
            reason: None,
            sign_changed: sign,
            exited_domain: false,
            blowup_point: None,
            steps: 0,
        };
        let s = AuditSummary::of(&[
            e(true, Some(true)),
            e(false, Some(true)),
            e(true, None),
            e(false, Some(false)),
        ]);
        assert_eq!(
            (
                s.blowups,
                s.sign_changes,
                s.sign_change_with_blowup,
                s.violations,
                s.no_verdict
            ),
            (2, 2, 1, 1, 1)
        );
    }
}
