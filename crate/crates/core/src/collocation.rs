//! Collocation samples, inducing subsets and ordered functional vectors.
//!
//! Random streams are ChaCha20 keyed by the run seed, with a fixed stream id per
//! purpose. Changing the number of inducing points therefore never changes the
//! sample set.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgpError};
use crate::kernel::{DiffOp, Functional};

const STREAM_INTERIOR: u64 = 1;
const STREAM_BOUNDARY: u64 = 2;
const STREAM_INDUCING_INTERIOR: u64 = 3;
const STREAM_INDUCING_BOUNDARY: u64 = 4;

/// Seeded generator for one purpose-specific stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Axis-aligned box, possibly periodic along some axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    /// Axis whose high face is not part of the boundary.
    pub time_axis: Option<usize>,
}

/// One face `{x_axis = value}` of the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub value: f64,
    pub measure: f64,
}

impl Domain {
    pub fn boxed(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let n = bounds.len();
        Domain::new(bounds, vec![false; n], None)
    }

    pub fn torus(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let n = bounds.len();
        Domain::new(bounds, vec![true; n], None)
    }

    /// Space-time box with time along `time_axis`; only the initial face bounds it in time.
    pub fn space_time(bounds: Vec<(f64, f64)>, time_axis: usize) -> Result<Self> {
        let n = bounds.len();
        Domain::new(bounds, vec![false; n], Some(time_axis))
    }

    pub fn new(bounds: Vec<(f64, f64)>, periodic: Vec<bool>, time_axis: Option<usize>) -> Result<Self> {
        if bounds.is_empty() || periodic.len() != bounds.len() {
            return Err(SgpError::InvalidArgument(
                "domain needs one periodicity flag per axis".into(),
            ));
        }
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(SgpError::InvalidArgument(format!(
                "empty axis interval ({lo}, {hi})"
            )));
        }
        if let Some(t) = time_axis {
            if t >= bounds.len() || periodic[t] {
                return Err(SgpError::InvalidArgument(format!(
                    "time axis {t} must be a non-periodic axis"
                )));
            }
        }
        Ok(Domain {
            bounds,
            periodic,
            time_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Faces forming the boundary, each with its (d-1)-dimensional measure.
    pub fn boundary_faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for axis in 0..self.dim() {
            if self.periodic[axis] {
                continue;
            }
            let measure: f64 = (0..self.dim())
                .filter(|&a| a != axis)
                .map(|a| self.bounds[a].1 - self.bounds[a].0)
                .product();
            let (lo, hi) = self.bounds[axis];
            faces.push(Face {
                axis,
                value: lo,
                measure,
            });
            if self.time_axis != Some(axis) {
                faces.push(Face {
                    axis,
                    value: hi,
                    measure,
                });
            }
        }
        faces
    }

    pub fn has_boundary(&self) -> bool {
        self.periodic.iter().any(|p| !p)
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Interior and boundary collocation points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub interior: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The points picked by `inducing`, in index order.
    pub fn subset(&self, inducing: &InducingSet) -> SampleSet {
        SampleSet {
            interior: inducing.interior.iter().map(|&i| self.interior[i].clone()).collect(),
            boundary: inducing.boundary.iter().map(|&i| self.boundary[i].clone()).collect(),
            seed: self.seed,
        }
    }
}

/// Indices of inducing points into a [`SampleSet`], stratified.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducingSet {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
}

impl InducingSet {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn uniform_open(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            let v = lo + (hi - lo) * u;
            if v > lo && v < hi {
                return v;
            }
        }
    }
}

/// Draws `n_total` points: `round(ratio * n_total)` uniform in the open box, the rest on the
/// boundary faces (face chosen proportional to its measure). Domains without boundary put
/// every point in the interior and ignore `interior_ratio`.
pub fn sample_collocation(domain: &Domain, n_total: usize, interior_ratio: f64, seed: u64) -> Result<SampleSet> {
    if n_total < 4 {
        return Err(SgpError::InvalidConfiguration(format!(
            "need at least 4 samples, got {n_total}"
        )));
    }
    let faces = domain.boundary_faces();
    let n_interior = if faces.is_empty() {
        n_total
    } else {
        if !(interior_ratio > 0.0 && interior_ratio < 1.0) {
            return Err(SgpError::InvalidConfiguration(format!(
                "interior ratio must lie in (0, 1), got {interior_ratio}"
            )));
        }
        let n = (interior_ratio * n_total as f64).round() as usize;
        if n >= n_total || n == 0 {
            return Err(SgpError::InvalidConfiguration(format!(
                "ratio {interior_ratio} with {n_total} samples leaves an empty stratum"
            )));
        }
        n
    };

    let mut rng = stream_rng(seed, STREAM_INTERIOR);
    let interior = (0..n_interior)
        .map(|_| {
            domain
                .bounds
                .iter()
                .zip(&domain.periodic)
                .map(|(&(lo, hi), &per)| {
                    if per {
                        lo + (hi - lo) * rng.random::<f64>()
                    } else {
                        uniform_open(&mut rng, lo, hi)
                    }
                })
                .collect()
        })
        .collect();

    let mut rng = stream_rng(seed, STREAM_BOUNDARY);
    let total_measure: f64 = faces.iter().map(|f| f.measure).sum();
    let boundary = (0..n_total - n_interior)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total_measure;
            let mut face = faces[faces.len() - 1];
            for f in &faces {
                if pick < f.measure {
                    face = *f;
                    break;
                }
                pick -= f.measure;
            }
            domain
                .bounds
                .iter()
                .enumerate()
                .map(|(a, &(lo, hi))| {
                    if a == face.axis {
                        face.value
                    } else {
                        lo + (hi - lo) * rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();

    Ok(SampleSet {
        interior,
        boundary,
        seed,
    })
}

fn draw_sorted(rng: &mut ChaCha20Rng, n: usize, m: usize) -> Vec<usize> {
    let mut v = index::sample(rng, n, m).into_vec();
    v.sort_unstable();
    v
}

/// Picks `m_total` inducing points uniformly without replacement within each stratum.
/// When the sample set has no boundary points every inducing point is interior.
pub fn select_inducing(samples: &SampleSet, m_total: usize, interior_ratio: f64, seed: u64) -> Result<InducingSet> {
    if m_total == 0 {
        return Err(SgpError::InvalidConfiguration("need at least one inducing point".into()));
    }
    let m_interior = if samples.boundary.is_empty() {
        m_total
    } else {
        if !(interior_ratio > 0.0 && interior_ratio <= 1.0) {
            return Err(SgpError::InvalidConfiguration(format!(
                "inducing interior ratio must lie in (0, 1], got {interior_ratio}"
            )));
        }
        (interior_ratio * m_total as f64).round() as usize
    };
    let m_boundary = m_total - m_interior.min(m_total);
    if m_interior > samples.interior.len() || m_boundary > samples.boundary.len() {
        return Err(SgpError::InvalidConfiguration(format!(
            "cannot pick {m_interior} interior / {m_boundary} boundary inducing points from {} / {} samples",
            samples.interior.len(),
            samples.boundary.len()
        )));
    }
    let interior = draw_sorted(
        &mut stream_rng(seed, STREAM_INDUCING_INTERIOR),
        samples.interior.len(),
        m_interior,
    );
    let boundary = draw_sorted(
        &mut stream_rng(seed, STREAM_INDUCING_BOUNDARY),
        samples.boundary.len(),
        m_boundary,
    );
    Ok(InducingSet { interior, boundary })
}

/// Which points an operator block is applied at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Interior,
    Boundary,
    /// Interior points followed by boundary points.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub label: String,
    pub op: DiffOp,
    pub points: PointClass,
}

impl BlockSpec {
    pub fn new(label: &str, op: DiffOp, points: PointClass) -> Self {
        BlockSpec {
            label: label.to_string(),
            op,
            points,
        }
    }
}

/// Ordered operator blocks making up a functional vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<BlockSpec>,
}

impl Layout {
    /// Entry count of this layout on `n_interior` interior and `n_boundary` boundary points.
    pub fn len_for(&self, n_interior: usize, n_boundary: usize) -> usize {
        self.blocks
            .iter()
            .map(|b| match b.points {
                PointClass::Interior => n_interior,
                PointClass::Boundary => n_boundary,
                PointClass::All => n_interior + n_boundary,
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRange {
    pub label: String,
    pub start: usize,
    pub len: usize,
}

/// Functionals ordered block by block, each block in sample order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalVector {
    pub entries: Vec<Functional>,
    pub blocks: Vec<BlockRange>,
}

impl FunctionalVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn block(&self, label: &str) -> Option<&BlockRange> {
        self.blocks.iter().find(|b| b.label == label)
    }
}

pub fn build_functionals(layout: &Layout, points: &SampleSet) -> FunctionalVector {
    let mut entries = Vec::with_capacity(layout.len_for(points.interior.len(), points.boundary.len()));
    let mut blocks = Vec::with_capacity(layout.blocks.len());
    for b in &layout.blocks {
        let start = entries.len();
        let pts: Box<dyn Iterator<Item = &Vec<f64>>> = match b.points {
            PointClass::Interior => Box::new(points.interior.iter()),
            PointClass::Boundary => Box::new(points.boundary.iter()),
            PointClass::All => Box::new(points.interior.iter().chain(points.boundary.iter())),
        };
        entries.extend(pts.map(|p| Functional::new(p.clone(), b.op.clone())));
        blocks.push(BlockRange {
            label: b.label.clone(),
            start,
            len: entries.len() - start,
        });
    }
    FunctionalVector { entries, blocks }
}
