//! Dense emotion maps over the embedding space and the arousal-valence
//! scatter plot.
//!
//! Planar grids (2-d embeddings) put row 0 at the top: row `r` has
//! `y = y.max − (y.max − y.min)·r/(rows−1)` and column `c` has
//! `x = x.min + (x.max − x.min)·c/(cols−1)`.
//!
//! Spherical grids (CAKE-Norm with k = 3) have one row per polar angle
//! `θ_r = π·r/(rows−1)` measured from +z, and one column per azimuth
//! `φ_c = −π + 2π·(c+1)/cols`, so φ covers `(−π, π]`. At the poles φ is
//! taken as 0. The embedding of a cell is
//! `(sinθ cosφ, sinθ sinφ, cosθ)`.
//!
//! Raster output is a binary PPM (`P6`), one pixel per cell, colored by
//! [`PALETTE`]. Vector output is SVG with one `rect` per cell and one `text`
//! label per class present in the map.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::datamodel::{DatasetBundle, EmotionClass, NUM_CLASSES};
use crate::metrics::per_class_f1;
use crate::model::{predict_embedding, ModelConfig, ModelError, ModelParams, Variant};
use crate::trainer::head_confusion;

/// RGB color of each class, in [`EmotionClass`] order.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [31, 119, 180],  // neutral: blue
    [255, 127, 14],  // happiness: orange
    [44, 160, 44],   // sad: green
    [214, 39, 40],   // surprise: red
    [148, 103, 189], // fear: purple
    [140, 86, 75],   // disgust: brown
    [227, 119, 194], // anger: pink
];

/// Side length of one grid cell in SVG user units.
pub const SVG_CELL: usize = 4;
/// Width and height of the scatter plot in SVG user units.
pub const SCATTER_SIZE: f64 = 420.0;
const SCATTER_HALF: f64 = 200.0;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("unsupported visualization: {0}")]
    Unsupported(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{count} records lack arousal-valence values; cannot draw the scatter plot")]
    MissingAv { count: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
}

impl Axis {
    fn at(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.resolution - 1) as f64
    }
}

/// How grid `(x, y)` maps onto the two embedding coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisOrder {
    /// `embedding = (x, y)`.
    #[default]
    Xy,
    /// `x` is valence (embedding[1]) and `y` is arousal (embedding[0]).
    ValenceArousal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Plane {
        x: Axis,
        y: Axis,
        order: AxisOrder,
    },
    Sphere {
        theta_resolution: usize,
        phi_resolution: usize,
    },
}

impl GridSpec {
    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            GridSpec::Plane { x, y, .. } => (y.resolution, x.resolution),
            GridSpec::Sphere {
                theta_resolution,
                phi_resolution,
            } => (theta_resolution, phi_resolution),
        }
    }

    pub fn len(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), VizError> {
        match *self {
            GridSpec::Plane { x, y, .. } => {
                for (name, a) in [("x", x), ("y", y)] {
                    if a.resolution < 2 {
                        return Err(VizError::InvalidGrid(format!("{name} resolution must be >= 2")));
                    }
                    if !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
                        return Err(VizError::InvalidGrid(format!("{name} range needs min < max")));
                    }
                }
            }
            GridSpec::Sphere {
                theta_resolution,
                phi_resolution,
            } => {
                if theta_resolution < 2 || phi_resolution < 2 {
                    return Err(VizError::InvalidGrid("sphere resolutions must be >= 2".into()));
                }
            }
        }
        Ok(())
    }

    /// `(θ, φ)` of a spherical cell.
    pub fn angles(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let GridSpec::Sphere {
            theta_resolution,
            phi_resolution,
        } = *self
        else {
            return None;
        };
        let theta = PI * row as f64 / (theta_resolution - 1) as f64;
        let phi = if row == 0 || row == theta_resolution - 1 {
            0.0
        } else {
            -PI + 2.0 * PI * (col + 1) as f64 / phi_resolution as f64
        };
        Some((theta, phi))
    }

    /// Embedding-space coordinate of a cell.
    pub fn embedding_at(&self, row: usize, col: usize) -> Vec<f64> {
        match *self {
            GridSpec::Plane { x, y, order } => {
                let xv = x.at(col);
                let yv = y.max - (y.max - y.min) * row as f64 / (y.resolution - 1) as f64;
                match order {
                    AxisOrder::Xy => vec![xv, yv],
                    AxisOrder::ValenceArousal => vec![yv, xv],
                }
            }
            GridSpec::Sphere { .. } => {
                let (theta, phi) = self.angles(row, col).expect("sphere");
                vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
            }
        }
    }
}

fn check_mode(cfg: &ModelConfig, sphere: bool) -> Result<(), VizError> {
    if sphere {
        if cfg.variant == Variant::CakeNorm && cfg.k == 3 {
            return Ok(());
        }
        return Err(VizError::Unsupported(format!(
            "spherical maps need cake-norm with k = 3, got {} with k = {}",
            cfg.variant, cfg.k
        )));
    }
    if cfg.embed_dim() == 2 {
        return Ok(());
    }
    Err(VizError::Unsupported(format!(
        "planar maps need a 2-d embedding, {} with k = {} has {} dimensions",
        cfg.variant,
        cfg.k,
        cfg.embed_dim()
    )))
}

/// Chooses the grid for a model. `resolution` is `(cols, rows)` for planes
/// and `(θ rows, φ cols)` for spheres.
///
/// Planar ranges cover the observed embeddings widened by 10% around their
/// center, or `[-1, 1]²` when none are supplied. AV models use
/// [`AxisOrder::ValenceArousal`].
pub fn plan_grid(
    cfg: &ModelConfig,
    observed: Option<&[Vec<f64>]>,
    resolution: (usize, usize),
) -> Result<GridSpec, VizError> {
    let grid = if cfg.variant == Variant::CakeNorm && cfg.k == 3 {
        GridSpec::Sphere {
            theta_resolution: resolution.0,
            phi_resolution: resolution.1,
        }
    } else {
        check_mode(cfg, false)?;
        let order = if cfg.variant == Variant::Av {
            AxisOrder::ValenceArousal
        } else {
            AxisOrder::Xy
        };
        let (xi, yi) = match order {
            AxisOrder::Xy => (0, 1),
            AxisOrder::ValenceArousal => (1, 0),
        };
        let range = |i: usize| -> (f64, f64) {
            let Some(obs) = observed.filter(|o| !o.is_empty()) else {
                return (-1.0, 1.0);
            };
            let lo = obs.iter().map(|e| e[i]).fold(f64::INFINITY, f64::min);
            let hi = obs.iter().map(|e| e[i]).fold(f64::NEG_INFINITY, f64::max);
            let center = (lo + hi) / 2.0;
            let half = ((hi - lo) / 2.0 * 1.1).max(1e-6);
            (center - half, center + half)
        };
        let (x0, x1) = range(xi);
        let (y0, y1) = range(yi);
        GridSpec::Plane {
            x: Axis {
                min: x0,
                max: x1,
                resolution: resolution.0,
            },
            y: Axis {
                min: y0,
                max: y1,
                resolution: resolution.1,
            },
            order,
        }
    };
    if let Some(obs) = observed {
        if let Some(e) = obs.iter().find(|e| e.len() != cfg.embed_dim()) {
            return Err(VizError::InvalidGrid(format!(
                "observed embedding has {} coordinates, model has {}",
                e.len(),
                cfg.embed_dim()
            )));
        }
    }
    grid.validate()?;
    Ok(grid)
}

/// Predicted class for every grid cell, plus optional per-class F1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionMap {
    pub grid: GridSpec,
    pub domain_id: usize,
    /// Row-major class indices, `rows x cols`.
    pub cells: Vec<u8>,
    /// Per-class macro F1 of the same head on the evaluation records.
    pub class_f1: Option<Vec<f64>>,
}

impl EmotionMap {
    pub fn rows(&self) -> usize {
        self.grid.shape().0
    }

    pub fn cols(&self) -> usize {
        self.grid.shape().1
    }

    pub fn cell(&self, row: usize, col: usize) -> EmotionClass {
        EmotionClass::from_index(self.cells[row * self.cols() + col] as usize).expect("valid cell")
    }
}

/// Classifies every grid coordinate with head `domain_id`. When `eval` is
/// given, per-class F1 of that head on the domain's records is attached.
pub fn render_emotion_map(
    params: &ModelParams,
    cfg: &ModelConfig,
    grid: &GridSpec,
    domain_id: usize,
    eval: Option<&DatasetBundle>,
) -> Result<EmotionMap, VizError> {
    grid.validate()?;
    check_mode(cfg, matches!(grid, GridSpec::Sphere { .. }))?;
    let (rows, cols) = grid.shape();
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let e = grid.embedding_at(r, c);
            cells.push(predict_embedding(params, &e, domain_id)?.index() as u8);
        }
    }
    let class_f1 = match eval {
        Some(b) if domain_id < b.n_domains() => {
            Some(per_class_f1(&head_confusion(params, cfg, b, domain_id, domain_id)?))
        }
        Some(b) => {
            return Err(ModelError::UnknownDomain {
                domain: domain_id,
                n_domains: b.n_domains(),
            }
            .into())
        }
        None => None,
    };
    Ok(EmotionMap {
        grid: *grid,
        domain_id,
        cells,
        class_f1,
    })
}

/// Binary PPM, one pixel per cell.
pub fn encode_ppm(map: &EmotionMap) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", map.cols(), map.rows()).into_bytes();
    for &c in &map.cells {
        out.extend_from_slice(&PALETTE[c as usize]);
    }
    out
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

/// Label anchor of each class present in the map, in cell coordinates
/// `(col, row)`: the mean cell position, or the centroid of the largest
/// 4-connected component when the mean falls on another class.
pub fn label_anchors(map: &EmotionMap) -> Vec<(EmotionClass, f64, f64)> {
    let (rows, cols) = (map.rows(), map.cols());
    let mut out = Vec::new();
    for class in EmotionClass::ALL {
        let id = class.index() as u8;
        let members: Vec<usize> = (0..map.cells.len()).filter(|&i| map.cells[i] == id).collect();
        if members.is_empty() {
            continue;
        }
        let centroid = |idx: &[usize]| {
            let n = idx.len() as f64;
            let cx = idx.iter().map(|&i| (i % cols) as f64).sum::<f64>() / n;
            let cy = idx.iter().map(|&i| (i / cols) as f64).sum::<f64>() / n;
            (cx, cy)
        };
        let (cx, cy) = centroid(&members);
        let at = (cy.round() as usize).min(rows - 1) * cols + (cx.round() as usize).min(cols - 1);
        if map.cells[at] == id {
            out.push((class, cx, cy));
            continue;
        }
        let mut seen = vec![false; map.cells.len()];
        let mut largest: Vec<usize> = Vec::new();
        for &start in &members {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                let (r, c) = (i / cols, i % cols);
                let mut nbrs = Vec::with_capacity(4);
                if r > 0 {
                    nbrs.push(i - cols);
                }
                if r + 1 < rows {
                    nbrs.push(i + cols);
                }
                if c > 0 {
                    nbrs.push(i - 1);
                }
                if c + 1 < cols {
                    nbrs.push(i + 1);
                }
                for j in nbrs {
                    if !seen[j] && map.cells[j] == id {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            if comp.len() > largest.len() {
                largest = comp;
            }
        }
        let (cx, cy) = centroid(&largest);
        out.push((class, cx, cy));
    }
    out
}

/// SVG with one rect per cell and a text label per present class
/// (`"<class> <f1>"` when per-class F1 is attached).
pub fn encode_svg(map: &EmotionMap) -> String {
    let (rows, cols) = (map.rows(), map.cols());
    let s = SVG_CELL;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = cols * s,
        h = rows * s
    );
    for r in 0..rows {
        for c in 0..cols {
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{s}\" height=\"{s}\" fill=\"{}\"/>",
                c * s,
                r * s,
                hex(PALETTE[map.cells[r * cols + c] as usize])
            );
        }
    }
    for (class, cx, cy) in label_anchors(map) {
        let text = match &map.class_f1 {
            Some(f1) => format!("{} {:.2}", class.name(), f1[class.index()]),
            None => class.name().to_string(),
        };
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{text}</text>",
            (cx + 0.5) * s as f64,
            (cy + 0.5) * s as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Raster,
    Vector,
}

impl std::str::FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raster" | "ppm" => Ok(ImageFormat::Raster),
            "vector" | "svg" => Ok(ImageFormat::Vector),
            other => Err(format!("unknown image format {other:?} (raster | vector)")),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), VizError> {
    fs::write(path, bytes).map_err(|source| VizError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn emit_map_image(map: &EmotionMap, path: impl AsRef<Path>, format: ImageFormat) -> Result<(), VizError> {
    match format {
        ImageFormat::Raster => write_file(path.as_ref(), &encode_ppm(map)),
        ImageFormat::Vector => write_file(path.as_ref(), encode_svg(map).as_bytes()),
    }
}

/// Pixel position of an AV point: x from valence, y from arousal (up).
pub fn scatter_position(arousal: f64, valence: f64) -> (f64, f64) {
    let c = SCATTER_SIZE / 2.0;
    (c + SCATTER_HALF * valence, c - SCATTER_HALF * arousal)
}

/// SVG scatter of every record at (valence, arousal), colored by label, on
/// axes spanning `[-1, 1]²`.
pub fn encode_scatter_svg(bundle: &DatasetBundle) -> Result<String, VizError> {
    let missing = bundle.missing_av();
    if missing > 0 {
        return Err(VizError::MissingAv { count: missing });
    }
    let size = SCATTER_SIZE;
    let c = size / 2.0;
    let (lo, hi) = (c - SCATTER_HALF, c + SCATTER_HALF);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"{lo}\" y=\"{lo}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"black\"/>",
        w = hi - lo
    );
    let _ = writeln!(
        out,
        "<line x1=\"{lo}\" y1=\"{c}\" x2=\"{hi}\" y2=\"{c}\" stroke=\"gray\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{c}\" y1=\"{lo}\" x2=\"{c}\" y2=\"{hi}\" stroke=\"gray\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{hi}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">valence</text>",
        c - 4.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"10\">arousal</text>",
        c + 4.0,
        lo + 10.0
    );
    for r in bundle.records() {
        let av = r.av.expect("checked above");
        let (x, y) = scatter_position(av.arousal, av.valence);
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\" fill=\"{}\"/>",
            hex(PALETTE[r.label.index()])
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn scatter_av(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<(), VizError> {
    let svg = encode_scatter_svg(bundle)?;
    write_file(path.as_ref(), svg.as_bytes())
}
