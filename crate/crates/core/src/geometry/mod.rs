//! Rectangular regions, node layouts and distance functions.

mod index;

pub use index::{rank_cmp, rank_key, ActiveIndex, TIE_QUANTUM};

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Wrap-around distance; removes border effects.
    Toroidal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    width: f64,
    height: f64,
    metric: Metric,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Displacement from one point to another, wrapped to the minimum image
/// on toroidal regions.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
}

impl Offset {
    pub fn norm(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy).sqrt()
    }
}

impl Region {
    pub fn new(width: f64, height: f64, metric: Metric) -> Result<Self> {
        if !(width > 0.0 && width.is_finite() && height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "region dimensions must be positive, got {width} x {height}"
            )));
        }
        Ok(Self { width, height, metric })
    }

    pub fn unit_square(metric: Metric) -> Self {
        Self { width: 1.0, height: 1.0, metric }
    }

    /// Toroidal region sized so a triangular lattice of density `z` tiles it
    /// exactly, with dimensions close to `approx_width` x `approx_height`.
    pub fn hex_torus(z: f64, approx_width: f64, approx_height: f64) -> Result<Self> {
        let spacing = hex_spacing(z)?;
        let row_step = spacing * 3f64.sqrt() / 2.0;
        let cols = (approx_width / spacing).round().max(1.0);
        // An even row count keeps the odd-row shift consistent across the seam.
        let rows = ((approx_height / row_step / 2.0).round() * 2.0).max(2.0);
        Self::new(cols * spacing, rows * row_step, Metric::Toroidal)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x < self.width && p.y >= 0.0 && p.y < self.height
    }

    pub fn offset(&self, from: Point, to: Point) -> Offset {
        let mut dx = to.x - from.x;
        let mut dy = to.y - from.y;
        if self.metric == Metric::Toroidal {
            dx = wrap(dx, self.width);
            dy = wrap(dy, self.height);
        }
        Offset { dx, dy }
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        self.offset(a, b).norm()
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            uniform_below(rng, self.width),
            uniform_below(rng, self.height),
        )
    }
}

fn wrap(d: f64, span: f64) -> f64 {
    if d > span / 2.0 {
        d - span
    } else if d < -span / 2.0 {
        d + span
    } else {
        d
    }
}

/// Uniform draw in `[0, upper)`; rejects the rare product that rounds up to
/// `upper`.
fn uniform_below<R: Rng + ?Sized>(rng: &mut R, upper: f64) -> f64 {
    loop {
        let v = rng.random::<f64>() * upper;
        if v < upper {
            return v;
        }
    }
}

/// Distance between nearest neighbors of a triangular lattice holding `z`
/// nodes per unit area.
pub fn hex_spacing(z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {z}")));
    }
    Ok((2.0 / (3f64.sqrt() * z)).sqrt())
}

/// Immutable node positions. Node ids are indices into `positions`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    region: Region,
    positions: Vec<Point>,
}

impl Layout {
    pub fn new(region: Region, positions: Vec<Point>) -> Result<Self> {
        if let Some((id, p)) = positions.iter().enumerate().find(|(_, p)| !region.contains(**p)) {
            return Err(Error::InvalidParameter(format!(
                "node {id} at ({}, {}) lies outside the region",
                p.x, p.y
            )));
        }
        Ok(Self { region, positions })
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, id: usize) -> Point {
        self.positions[id]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.region.distance(self.positions[a], self.positions[b])
    }

    /// For every node, all other nodes within `radius`, ordered by distance
    /// then id.
    pub fn neighbor_table(&self, radius: f64) -> Vec<Vec<NeighborLink>> {
        let index = ActiveIndex::build(self, 0..self.len());
        (0..self.len())
            .map(|id| {
                let p = self.positions[id];
                index
                    .within_radius(p, radius, Some(id))
                    .into_iter()
                    .map(|(other, distance)| NeighborLink {
                        id: other,
                        distance,
                        offset: self.region.offset(p, self.positions[other]),
                    })
                    .collect()
            })
            .collect()
    }

    /// Writes `id,x,y` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "id,x,y")?;
        for (id, p) in self.positions.iter().enumerate() {
            writeln!(out, "{id},{},{}", fmt_sig17(p.x), fmt_sig17(p.y))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(region: Region, input: R) -> Result<Self> {
        let mut positions = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "id,x,y" {
                    return Err(Error::Config(format!("unexpected layout header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            if fields.len() != 3 {
                return Err(Error::Config(format!("line {}: expected 3 fields", lineno + 1)));
            }
            let id: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
            if id != positions.len() {
                return Err(Error::Config(format!("line {}: ids must be sequential", lineno + 1)));
            }
            positions.push(Point::new(parse(fields[1])?, parse(fields[2])?));
        }
        Self::new(region, positions)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborLink {
    pub id: usize,
    pub distance: f64,
    pub offset: Offset,
}

/// `n` i.i.d. uniform nodes over the region. Exactly coincident positions
/// are redrawn so every pairwise distance is positive.
pub fn place_poisson(n: usize, region: Region, seed: u64) -> Layout {
    let mut rng = rng::stream(seed, &[rng::TAG_LAYOUT]);
    let mut seen = HashSet::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    while positions.len() < n {
        let p = region.sample_point(&mut rng);
        if seen.insert((p.x.to_bits(), p.y.to_bits())) {
            positions.push(p);
        }
    }
    Layout { region, positions }
}

/// Triangular lattice with nearest-neighbor spacing `sqrt(2 / (sqrt(3) z))`,
/// clipped to the region. On a region from [`Region::hex_torus`] the lattice
/// wraps seamlessly.
pub fn place_hex_lattice(z: f64, region: Region) -> Result<Layout> {
    let spacing = hex_spacing(z)?;
    let row_step = spacing * 3f64.sqrt() / 2.0;
    let (x0, y0) = (spacing / 4.0, row_step / 2.0);
    // Points closer than this to the far edge would duplicate x = 0 after wrapping.
    let slack = 1e-9 * spacing;
    let mut positions = Vec::new();
    for row in 0.. {
        let y = y0 + row as f64 * row_step;
        if y >= region.height - slack {
            break;
        }
        let shift = if row % 2 == 1 { spacing / 2.0 } else { 0.0 };
        for col in 0.. {
            let x = x0 + shift + col as f64 * spacing;
            if x >= region.width - slack {
                break;
            }
            positions.push(Point::new(x, y));
        }
    }
    Ok(Layout { region, positions })
}

/// Formats with 17 significant digits in plain decimal notation, enough to
/// round-trip any `f64`.
pub fn fmt_sig17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (16 - exponent).max(0) as usize;
    let mut s = String::new();
    let _ = write!(s, "{v:.decimals$}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let eu = Region::unit_square(Metric::Euclidean);
        let to = Region::unit_square(Metric::Toroidal);
        let a = Point::new(0.1, 0.5);
        let b = Point::new(0.9, 0.5);
        assert_eq!(eu.distance(a, a), 0.0);
        assert!((eu.distance(a, b) - 0.8).abs() < 1e-12);
        assert!((to.distance(a, b) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn toroidal_matches_nine_image_minimum() {
        let to = Region::new(2.0, 1.0, Metric::Toroidal).unwrap();
        let mut rng = rng::stream(3, &[]);
        for _ in 0..1000 {
            let a = to.sample_point(&mut rng);
            let b = to.sample_point(&mut rng);
            let mut best = f64::INFINITY;
            for ix in -1..=1 {
                for iy in -1..=1 {
                    let bx = b.x + ix as f64 * 2.0;
                    let by = b.y + iy as f64;
                    best = best.min(((bx - a.x).powi(2) + (by - a.y).powi(2)).sqrt());
                }
            }
            assert!((to.distance(a, b) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn region_rejects_bad_dimensions() {
        assert!(Region::new(0.0, 1.0, Metric::Euclidean).is_err());
        assert!(Region::new(1.0, -1.0, Metric::Euclidean).is_err());
        assert!(Region::new(f64::NAN, 1.0, Metric::Euclidean).is_err());
    }

    #[test]
    fn poisson_is_deterministic_and_inside() {
        let region = Region::unit_square(Metric::Euclidean);
        assert!(place_poisson(0, region, 1).is_empty());
        let a = place_poisson(1000, region, 42);
        let b = place_poisson(1000, region, 42);
        let c = place_poisson(1000, region, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.positions().iter().all(|p| region.contains(*p)));
    }

    #[test]
    fn poisson_subsquare_count_is_binomial() {
        let region = Region::unit_square(Metric::Euclidean);
        let layout = place_poisson(100_000, region, 9);
        // sigma = sqrt(1000 * 0.99)
        let sigma = (1000.0f64 * 0.99).sqrt();
        for (x0, y0) in [(0.0, 0.0), (0.45, 0.45), (0.9, 0.2)] {
            let count = layout
                .positions()
                .iter()
                .filter(|p| p.x >= x0 && p.x < x0 + 0.1 && p.y >= y0 && p.y < y0 + 0.1)
                .count() as f64;
            assert!((count - 1000.0).abs() < 3.0 * sigma, "count {count}");
        }
    }

    #[test]
    fn hex_spacing_at_unit_density() {
        let r = hex_spacing(1.0).unwrap();
        assert!((r - (2.0 / 3f64.sqrt()).sqrt()).abs() < 1e-15);
        assert!((r - 1.0746).abs() < 1e-4);
        assert!(hex_spacing(0.0).is_err());
        assert!(place_hex_lattice(-1.0, Region::unit_square(Metric::Euclidean)).is_err());
    }

    #[test]
    fn hex_count_in_unit_square() {
        for metric in [Metric::Euclidean, Metric::Toroidal] {
            let layout = place_hex_lattice(350.0, Region::unit_square(metric)).unwrap();
            let n = layout.len() as f64;
            assert!((n - 350.0).abs() <= 0.05 * 350.0, "{metric:?}: {n}");
        }
        let torus = Region::hex_torus(350.0, 1.0, 1.0).unwrap();
        let layout = place_hex_lattice(350.0, torus).unwrap();
        let realized = layout.len() as f64 / torus.area();
        assert!((realized - 350.0).abs() < 1e-6, "{realized}");
        assert!((layout.len() as f64 - 350.0).abs() <= 0.05 * 350.0);
    }

    #[test]
    fn hex_interior_nodes_have_six_neighbors_at_spacing() {
        for z in [1.0, 37.5, 350.0] {
            let r = hex_spacing(z).unwrap();
            let side = 12.0 * r;
            let region = Region::new(side, side, Metric::Euclidean).unwrap();
            let layout = place_hex_lattice(z, region).unwrap();
            let table = layout.neighbor_table(1.5 * r);
            let mut interior = 0;
            for (id, links) in table.iter().enumerate() {
                let p = layout.position(id);
                if p.x < 2.0 * r || p.x > side - 2.0 * r || p.y < 2.0 * r || p.y > side - 2.0 * r {
                    continue;
                }
                interior += 1;
                assert_eq!(links.len(), 6);
                assert!(links.iter().all(|l| (l.distance - r).abs() < 1e-9));
            }
            assert!(interior > 20);
        }
        // Seamless on the fitted torus: every node is interior.
        let torus = Region::hex_torus(350.0, 1.0, 1.0).unwrap();
        let layout = place_hex_lattice(350.0, torus).unwrap();
        let r = hex_spacing(350.0).unwrap();
        for links in layout.neighbor_table(1.5 * r) {
            assert_eq!(links.len(), 6);
            assert!(links.iter().all(|l| (l.distance - r).abs() < 1e-9));
        }
    }

    #[test]
    fn layout_rejects_outside_points() {
        let region = Region::unit_square(Metric::Euclidean);
        assert!(Layout::new(region, vec![Point::new(1.0, 0.5)]).is_err());
    }

    #[test]
    fn csv_format() {
        let region = Region::unit_square(Metric::Euclidean);
        let layout = Layout::new(region, vec![Point::new(0.1, 0.25), Point::new(0.0, 0.5)]).unwrap();
        let mut buf = Vec::new();
        layout.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "id,x,y\n0,0.10000000000000001,0.25000000000000000\n1,0,0.50000000000000000\n"
        );
    }

    proptest! {
        #[test]
        fn toroidal_never_exceeds_euclidean(ax in 0.0..1.0f64, ay in 0.0..1.0f64,
                                            bx in 0.0..1.0f64, by in 0.0..1.0f64) {
            let a = Point::new(ax, ay);
            let b = Point::new(bx, by);
            let eu = Region::unit_square(Metric::Euclidean).distance(a, b);
            let to = Region::unit_square(Metric::Toroidal).distance(a, b);
            prop_assert!(to <= eu);
        }

        #[test]
        fn csv_round_trips(seed in any::<u64>(), n in 0usize..50) {
            let region = Region::new(3.0, 0.7, Metric::Euclidean).unwrap();
            let layout = place_poisson(n, region, seed);
            let mut buf = Vec::new();
            layout.write_csv(&mut buf).unwrap();
            let back = Layout::read_csv(region, buf.as_slice()).unwrap();
            prop_assert_eq!(back, layout);
        }
    }
}
