//! Measurable subsets of (0,1) and (0,1)x(0,T) with exact measures.
//!
//! Sets are finite unions of closed intervals (1D) or axis-aligned closed
//! rectangles (2D) with rational endpoints. All measure arithmetic runs in
//! exact rationals, so the constructions the observability pipeline depends
//! on come with hard guarantees rather than tolerances:
//!
//! * the Smith-Volterra-Cantor generator produces nowhere-dense sets of
//!   known positive measure,
//! * `slice_set` reproduces the Fubini slicing argument exactly (the set E
//!   of fat time slices always satisfies 2 |omega| |E| >= |D|),
//! * `telescoping_sequence` verifies the geometric-gap / one-third-measure
//!   conditions of the density-point construction by exact comparison.
//!
//! Serialized form carries only cell coordinates; measures are re-derived on
//! load and never trusted from the file.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rational::{Rat, RatError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Rational(#[from] RatError),
    #[error("interval [{0}, {1}] has negative length")]
    NegativeInterval(f64, f64),
    #[error("rectangle [{0},{1}]x[{2},{3}] has negative extent")]
    NegativeRect(f64, f64, f64, f64),
    #[error("rectangles {0} and {1} overlap with positive area")]
    OverlappingRects(usize, usize),
    #[error("set has zero measure but the operation requires positive measure")]
    DegenerateInput,
    #[error("fat Cantor parameters out of range: level {level}, removal ratio {ratio}")]
    CantorParams { level: i64, ratio: f64 },
    #[error("q = {0} must lie strictly inside (0, 1)")]
    RatioRange(f64),
    #[error("point {l} fails the density surrogate: fraction {fraction:.4} < 0.99 over [l, l + {delta:.3e}]")]
    NotDensityPoint { l: f64, fraction: f64, delta: f64 },
    #[error("no admissible ell_1 found for the telescoping sequence; best margin achieved {best_margin:.3e}")]
    TelescopingSearchFailed { best_margin: f64 },
    #[error("set serialization has type tag '{0}', expected '{1}'")]
    WrongSetTag(String, String),
}

/// Finite union of disjoint closed intervals with exact endpoints,
/// normalized (sorted, overlapping/touching intervals merged).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    ivs: Vec<(Rat, Rat)>,
}

/// Measurable subset of the spatial domain.
pub type SpaceSet = IntervalSet;
/// Measurable subset of the time interval.
pub type TimeSet = IntervalSet;

impl IntervalSet {
    pub fn empty() -> IntervalSet {
        IntervalSet { ivs: Vec::new() }
    }

    pub fn new(mut ivs: Vec<(Rat, Rat)>) -> Result<IntervalSet, GeometryError> {
        for &(a, b) in &ivs {
            if a > b {
                return Err(GeometryError::NegativeInterval(a.to_f64(), b.to_f64()));
            }
        }
        ivs.retain(|(a, b)| a < b);
        ivs.sort();
        let mut merged: Vec<(Rat, Rat)> = Vec::with_capacity(ivs.len());
        for (a, b) in ivs {
            if let Some(last) = merged.last_mut() {
                if a <= last.1 {
                    last.1 = last.1.max(b);
                    continue;
                }
            }
            merged.push((a, b));
        }
        Ok(IntervalSet { ivs: merged })
    }

    pub fn from_f64_cells(cells: &[(f64, f64)]) -> Result<IntervalSet, GeometryError> {
        let ivs = cells
            .iter()
            .map(|&(a, b)| Ok((Rat::from_f64(a)?, Rat::from_f64(b)?)))
            .collect::<Result<Vec<_>, GeometryError>>()?;
        IntervalSet::new(ivs)
    }

    pub fn interval(a: f64, b: f64) -> Result<IntervalSet, GeometryError> {
        IntervalSet::from_f64_cells(&[(a, b)])
    }

    pub fn intervals(&self) -> &[(Rat, Rat)] {
        &self.ivs
    }

    pub fn to_f64_cells(&self) -> Vec<(f64, f64)> {
        self.ivs
            .iter()
            .map(|&(a, b)| (a.to_f64(), b.to_f64()))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ivs.is_empty()
    }

    pub fn measure(&self) -> Result<Rat, GeometryError> {
        let mut total = Rat::ZERO;
        for &(a, b) in &self.ivs {
            total = total.add(b.sub(a)?)?;
        }
        Ok(total)
    }

    pub fn measure_f64(&self) -> f64 {
        self.measure()
            .map(|m| m.to_f64())
            .unwrap_or_else(|_| self.ivs.iter().map(|&(a, b)| b.to_f64() - a.to_f64()).sum())
    }

    pub fn inf(&self) -> Option<Rat> {
        self.ivs.first().map(|&(a, _)| a)
    }

    pub fn sup(&self) -> Option<Rat> {
        self.ivs.last().map(|&(_, b)| b)
    }

    pub fn contains_point(&self, x: Rat) -> bool {
        self.ivs.iter().any(|&(a, b)| a <= x && x <= b)
    }

    pub fn contains_point_f64(&self, x: f64) -> bool {
        match Rat::from_f64(x) {
            Ok(q) => self.contains_point(q),
            Err(_) => self
                .ivs
                .iter()
                .any(|&(a, b)| a.to_f64() <= x && x <= b.to_f64()),
        }
    }

    /// Intersection with the closed interval [a, b].
    pub fn clip(&self, a: Rat, b: Rat) -> Result<IntervalSet, GeometryError> {
        let mut out = Vec::new();
        for &(lo, hi) in &self.ivs {
            let l = lo.max(a);
            let h = hi.min(b);
            if l < h {
                out.push((l, h));
            }
        }
        IntervalSet::new(out)
    }

    pub fn intersect(&self, other: &IntervalSet) -> Result<IntervalSet, GeometryError> {
        let mut out = Vec::new();
        for &(a, b) in &self.ivs {
            for &(c, d) in &other.ivs {
                if d <= a {
                    continue;
                }
                if c >= b {
                    break;
                }
                let lo = a.max(c);
                let hi = b.min(d);
                if lo < hi {
                    out.push((lo, hi));
                }
            }
        }
        IntervalSet::new(out)
    }

    pub fn union(&self, other: &IntervalSet) -> Result<IntervalSet, GeometryError> {
        let mut ivs = self.ivs.clone();
        ivs.extend(other.ivs.iter().copied());
        IntervalSet::new(ivs)
    }

    /// True when `self` is contained in `other` (up to measure zero this is
    /// exact containment of closed interval unions).
    pub fn subset_of(&self, other: &IntervalSet) -> bool {
        'outer: for &(a, b) in &self.ivs {
            for &(c, d) in &other.ivs {
                if c <= a && b <= d {
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }
}

/// Finite union of pairwise-disjoint axis-aligned closed rectangles in
/// `[0,1] x [0,T]`, stored with exact coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceTimeSet {
    rects: Vec<Rect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: Rat,
    pub x1: Rat,
    pub t0: Rat,
    pub t1: Rat,
}

impl Rect {
    fn area(&self) -> Result<Rat, GeometryError> {
        Ok(self.x1.sub(self.x0)?.mul(self.t1.sub(self.t0)?)?)
    }
}

impl SpaceTimeSet {
    pub fn new(rects: Vec<Rect>) -> Result<SpaceTimeSet, GeometryError> {
        for r in &rects {
            if r.x0 > r.x1 || r.t0 > r.t1 {
                return Err(GeometryError::NegativeRect(
                    r.x0.to_f64(),
                    r.x1.to_f64(),
                    r.t0.to_f64(),
                    r.t1.to_f64(),
                ));
            }
        }
        let rects: Vec<Rect> = rects
            .into_iter()
            .filter(|r| r.x0 < r.x1 && r.t0 < r.t1)
            .collect();
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                let (a, b) = (&rects[i], &rects[j]);
                let x_overlap = a.x0.max(b.x0) < a.x1.min(b.x1);
                let t_overlap = a.t0.max(b.t0) < a.t1.min(b.t1);
                if x_overlap && t_overlap {
                    return Err(GeometryError::OverlappingRects(i, j));
                }
            }
        }
        Ok(SpaceTimeSet { rects })
    }

    pub fn from_f64_cells(cells: &[[f64; 4]]) -> Result<SpaceTimeSet, GeometryError> {
        let rects = cells
            .iter()
            .map(|c| {
                Ok(Rect {
                    x0: Rat::from_f64(c[0])?,
                    x1: Rat::from_f64(c[1])?,
                    t0: Rat::from_f64(c[2])?,
                    t1: Rat::from_f64(c[3])?,
                })
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        SpaceTimeSet::new(rects)
    }

    /// Product set X x S of a space set and a time set.
    pub fn product(xs: &SpaceSet, ts: &TimeSet) -> Result<SpaceTimeSet, GeometryError> {
        let mut rects = Vec::new();
        for &(x0, x1) in xs.intervals() {
            for &(t0, t1) in ts.intervals() {
                rects.push(Rect { x0, x1, t0, t1 });
            }
        }
        SpaceTimeSet::new(rects)
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn to_f64_cells(&self) -> Vec<[f64; 4]> {
        self.rects
            .iter()
            .map(|r| [r.x0.to_f64(), r.x1.to_f64(), r.t0.to_f64(), r.t1.to_f64()])
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn measure(&self) -> Result<Rat, GeometryError> {
        let mut total = Rat::ZERO;
        for r in &self.rects {
            total = total.add(r.area()?)?;
        }
        Ok(total)
    }

    pub fn measure_f64(&self) -> f64 {
        self.measure().map(|m| m.to_f64()).unwrap_or(f64::NAN)
    }

    /// Time slice D_t = { x : (x, t) in D } as an exact interval union.
    pub fn slice_at(&self, t: Rat) -> Result<SpaceSet, GeometryError> {
        let mut ivs = Vec::new();
        for r in &self.rects {
            if r.t0 <= t && t <= r.t1 {
                ivs.push((r.x0, r.x1));
            }
        }
        IntervalSet::new(ivs)
    }

    pub fn slice_at_f64(&self, t: f64) -> Result<SpaceSet, GeometryError> {
        self.slice_at(Rat::from_f64(t)?)
    }

    /// Spatial restriction to `omega` and temporal restriction to [0, T].
    pub fn clip_space_time(
        &self,
        omega: &SpaceSet,
        t_max: Rat,
    ) -> Result<SpaceTimeSet, GeometryError> {
        let mut rects = Vec::new();
        for r in &self.rects {
            let t0 = r.t0.max(Rat::ZERO);
            let t1 = r.t1.min(t_max);
            if t0 >= t1 {
                continue;
            }
            for &(a, b) in omega.intervals() {
                let x0 = r.x0.max(a);
                let x1 = r.x1.min(b);
                if x0 < x1 {
                    rects.push(Rect { x0, x1, t0, t1 });
                }
            }
        }
        SpaceTimeSet::new(rects)
    }

    /// Sorted deduplicated time breakpoints of the rectangle decomposition.
    pub fn time_breakpoints(&self) -> Vec<Rat> {
        let mut ts: Vec<Rat> = self.rects.iter().flat_map(|r| [r.t0, r.t1]).collect();
        ts.sort();
        ts.dedup();
        ts
    }

    /// Exact Fubini integral of slice measures over time; equals the total
    /// measure for rectangle unions.
    pub fn integral_of_slices(&self) -> Result<Rat, GeometryError> {
        let bps = self.time_breakpoints();
        let mut total = Rat::ZERO;
        for w in bps.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            let mid = ta.add(tb)?.div(Rat::from_int(2))?;
            let slice = self.slice_at(mid)?;
            total = total.add(slice.measure()?.mul(tb.sub(ta)?)?)?;
        }
        Ok(total)
    }
}

/// Level-`level` Smith-Volterra-Cantor pre-set on `carrier = [a, b]`.
///
/// At step n (1-based) a centered open interval of relative length
/// `ratio^n` is removed from each of the 2^(n-1) surviving intervals, so
/// the final measure is |carrier| * prod_{n=1..level} (1 - ratio^n),
/// computed exactly. The ratio is snapped to the nearest rational with
/// denominator <= 4096 so the construction stays exact.
pub fn fat_cantor(
    level: u32,
    removal_ratio: f64,
    carrier: (f64, f64),
) -> Result<IntervalSet, GeometryError> {
    if !(removal_ratio > 0.0 && removal_ratio < 1.0 / 3.0) {
        return Err(GeometryError::CantorParams {
            level: level as i64,
            ratio: removal_ratio,
        });
    }
    let ratio = Rat::approx_f64(removal_ratio, 4096)?;
    if !ratio.is_positive() || ratio >= Rat::new(1, 3)? {
        return Err(GeometryError::CantorParams {
            level: level as i64,
            ratio: removal_ratio,
        });
    }
    let a = Rat::from_f64(carrier.0)?;
    let b = Rat::from_f64(carrier.1)?;
    if a >= b {
        return Err(GeometryError::NegativeInterval(carrier.0, carrier.1));
    }
    let mut ivs = vec![(a, b)];
    let mut rpow = Rat::ONE;
    let half = Rat::new(1, 2)?;
    for _step in 1..=level {
        rpow = rpow.mul(ratio)?;
        let keep_frac = Rat::ONE.sub(rpow)?.mul(half)?; // each child keeps (1 - r^n)/2
        if !keep_frac.is_positive() {
            return Err(GeometryError::CantorParams {
                level: level as i64,
                ratio: removal_ratio,
            });
        }
        let mut next = Vec::with_capacity(ivs.len() * 2);
        for (lo, hi) in ivs {
            let len = hi.sub(lo)?;
            let keep = len.mul(keep_frac)?;
            next.push((lo, lo.add(keep)?));
            next.push((hi.sub(keep)?, hi));
        }
        ivs = next;
    }
    IntervalSet::new(ivs)
}

/// Result of the Fubini slicing construction.
#[derive(Debug, Clone)]
pub struct SliceResult {
    /// Set of times whose slice measure reaches |D|/(2T).
    pub fat_times: TimeSet,
    /// The threshold |D| / (2T).
    pub threshold: f64,
    /// Measure removed when clipping D to omega x (0, T).
    pub clipped_measure: f64,
}

/// Slices D into E = { t : |D_t| >= |D|/(2T) }, exactly.
///
/// D is clipped to `omega x (0, T)` first; the clipped measure is reported.
/// The returned E always satisfies 2 |omega| |E| >= |D| (Fubini argument),
/// with |D| the post-clip measure.
pub fn slice_set(
    d: &SpaceTimeSet,
    omega: &SpaceSet,
    t_final: f64,
) -> Result<SliceResult, GeometryError> {
    let t_max = Rat::from_f64(t_final)?;
    let original = d.measure()?;
    let clipped = d.clip_space_time(omega, t_max)?;
    let d_measure = clipped.measure()?;
    if !d_measure.is_positive() {
        return Err(GeometryError::DegenerateInput);
    }
    let two_t = t_max.mul(Rat::from_int(2))?;
    // membership test 2T |D_t| >= |D| avoids forming the quotient
    let bps = clipped.time_breakpoints();
    let mut fat: Vec<(Rat, Rat)> = Vec::new();
    for w in bps.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let mid = ta.add(tb)?.div(Rat::from_int(2))?;
        let slice_measure = clipped.slice_at(mid)?.measure()?;
        if slice_measure.mul(two_t)? >= d_measure {
            fat.push((ta, tb));
        }
    }
    let fat_times = IntervalSet::new(fat)?;
    Ok(SliceResult {
        fat_times,
        threshold: d_measure.to_f64() / (2.0 * t_final),
        clipped_measure: original.sub(d_measure)?.to_f64(),
    })
}

/// Searches interval endpoints and midpoints of E for a point satisfying the
/// density surrogate: the measure fraction of E over [l, l + |E|/100]
/// exceeds 0.99.
pub fn find_density_point(e: &TimeSet) -> Result<Option<f64>, GeometryError> {
    let total = e.measure()?;
    if !total.is_positive() {
        return Err(GeometryError::DegenerateInput);
    }
    let delta = total.div(Rat::from_int(100))?;
    let mut candidates = Vec::new();
    for &(a, b) in e.intervals() {
        candidates.push(a);
        candidates.push(a.add(b)?.div(Rat::from_int(2))?);
    }
    for l in candidates {
        if density_fraction(e, l, delta)? >= Rat::new(99, 100)? {
            return Ok(Some(l.to_f64()));
        }
    }
    Ok(None)
}

fn density_fraction(e: &TimeSet, l: Rat, delta: Rat) -> Result<Rat, GeometryError> {
    let window_measure = e.clip(l, l.add(delta)?)?.measure()?;
    window_measure.div(delta).map_err(Into::into)
}

/// Output of the telescoping-sequence construction.
#[derive(Debug, Clone)]
pub struct TelescopingSequence {
    /// ell_1 > ell_2 > ... > ell_{n_max + 2}, decreasing toward `l`.
    pub ells: Vec<f64>,
    /// Verified margin |E cap (ell_{n+1}, ell_n)| - (ell_n - ell_{n+1})/3
    /// per n (nonnegative for every returned n).
    pub margins: Vec<f64>,
    /// max_n |(ell_{n+1} - ell_{n+2}) - q (ell_n - ell_{n+1})|.
    pub gap_identity_residual: f64,
}

/// Builds the geometric telescoping sequence ell_n = l + (ell_1 - l) q^(n-1)
/// around a density point l of E and verifies the one-third measure bound
/// |E cap (ell_{n+1}, ell_n)| >= (ell_n - ell_{n+1})/3 exactly for every
/// n <= n_max. When `ell1` is not supplied, ell_1 is searched over a
/// geometric grid below sup E.
pub fn telescoping_sequence(
    e: &TimeSet,
    l: f64,
    q: f64,
    n_max: usize,
    ell1: Option<f64>,
) -> Result<TelescopingSequence, GeometryError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(GeometryError::RatioRange(q));
    }
    let total = e.measure()?;
    if !total.is_positive() {
        return Err(GeometryError::DegenerateInput);
    }
    let l_rat = Rat::from_f64(l)?;
    let delta = total.div(Rat::from_int(100))?;
    let fraction = density_fraction(e, l_rat, delta)?;
    if fraction < Rat::new(99, 100)? {
        return Err(GeometryError::NotDensityPoint {
            l,
            fraction: fraction.to_f64(),
            delta: delta.to_f64(),
        });
    }
    let sup = e.sup().unwrap().to_f64();
    let candidates: Vec<f64> = match ell1 {
        Some(v) => vec![v],
        None => {
            let span = sup - l;
            if span <= 0.0 {
                return Err(GeometryError::DegenerateInput);
            }
            (0..80).map(|j| l + span * 0.8f64.powi(j)).collect()
        }
    };
    let mut best_margin = f64::NEG_INFINITY;
    let one_third = Rat::new(1, 3)?;
    for ell1_cand in candidates {
        if ell1_cand <= l {
            continue;
        }
        let ells: Vec<f64> = (0..n_max + 2)
            .map(|n| l + (ell1_cand - l) * q.powi(n as i32))
            .collect();
        let mut margins = Vec::with_capacity(n_max);
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for n in 0..n_max {
            let hi = Rat::from_f64(ells[n])?;
            let lo = Rat::from_f64(ells[n + 1])?;
            let gap = hi.sub(lo)?;
            let inter = e.clip(lo, hi)?.measure()?;
            let margin = inter.sub(gap.mul(one_third)?)?;
            margins.push(margin.to_f64());
            worst = worst.min(margin.to_f64());
            if margin.is_negative() {
                ok = false;
            }
        }
        best_margin = best_margin.max(worst);
        if ok {
            let mut resid = 0.0f64;
            for n in 0..n_max {
                let lhs = ells[n + 1] - ells[n + 2];
                let rhs = q * (ells[n] - ells[n + 1]);
                resid = resid.max((lhs - rhs).abs());
            }
            return Ok(TelescopingSequence {
                ells,
                margins,
                gap_identity_residual: resid,
            });
        }
    }
    Err(GeometryError::TelescopingSearchFailed { best_margin })
}

// --- serialization -------------------------------------------------------
//
// {"type":"space","cells":[[a,b],...]}
// {"type":"time","cells":[[a,b],...]}
// {"type":"spacetime","cells":[[x0,x1,t0,t1],...]}
//
// IntervalSet serializes with the "space" tag and accepts either 1D tag.

#[derive(Serialize, Deserialize)]
struct TaggedCells {
    r#type: String,
    cells: Vec<Vec<f64>>,
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TaggedCells {
            r#type: "space".to_string(),
            cells: self
                .to_f64_cells()
                .into_iter()
                .map(|(a, b)| vec![a, b])
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tagged = TaggedCells::deserialize(deserializer)?;
        if tagged.r#type != "space" && tagged.r#type != "time" {
            return Err(D::Error::custom(format!(
                "set type '{}' is not a 1D set",
                tagged.r#type
            )));
        }
        let cells = tagged
            .cells
            .iter()
            .map(|c| {
                if c.len() != 2 {
                    Err(D::Error::custom("1D set cells need exactly 2 coordinates"))
                } else {
                    Ok((c[0], c[1]))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        IntervalSet::from_f64_cells(&cells).map_err(D::Error::custom)
    }
}

impl Serialize for SpaceTimeSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TaggedCells {
            r#type: "spacetime".to_string(),
            cells: self
                .to_f64_cells()
                .into_iter()
                .map(|c| c.to_vec())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpaceTimeSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tagged = TaggedCells::deserialize(deserializer)?;
        if tagged.r#type != "spacetime" {
            return Err(D::Error::custom(format!(
                "set type '{}' is not a spacetime set",
                tagged.r#type
            )));
        }
        let cells = tagged
            .cells
            .iter()
            .map(|c| {
                if c.len() != 4 {
                    Err(D::Error::custom(
                        "spacetime cells need exactly 4 coordinates",
                    ))
                } else {
                    Ok([c[0], c[1], c[2], c[3]])
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        SpaceTimeSet::from_f64_cells(&cells).map_err(D::Error::custom)
    }
}
