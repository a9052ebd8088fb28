use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud_io::{LabelMask, PointCloud};
use crate::error::{Error, Result};

/// Appearance and sampling density of one semantic class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStyle {
    pub name: String,
    /// Mean RGB, 0-255 per channel.
    pub color: [f64; 3],
    /// Per-channel standard deviation of the color jitter, 0-255 units.
    pub jitter: f64,
    /// Points per square meter of surface.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind {
    /// `z = 0` over the room footprint.
    Floor,
    /// `z = height` over the room footprint.
    Ceiling,
    /// The four vertical room boundaries.
    Walls,
    /// Axis-aligned box; top and four sides are sampled.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Vertical cylinder standing on the floor; the side is sampled.
    Pole {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub class: u8,
    /// Optional color override for this surface instance, 0-255.
    pub color: Option<[f64; 3]>,
}

/// Room-shaped synthetic scan description.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub scan_id: String,
    /// Width, depth, height in meters.
    pub extent: [f64; 3],
    pub classes: Vec<ClassStyle>,
    pub surfaces: Vec<Surface>,
    /// Standard deviation of isotropic position noise, meters.
    pub noise_sigma: f64,
    /// Multiplier on every class color; models per-room lighting.
    pub brightness: f64,
    pub seed: u64,
}

/// A generated scan with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub truth: LabelMask,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::validation("a scene needs at least two classes"));
        }
        if self.classes.len() > 254 {
            return Err(Error::validation("too many classes for a u8 label"));
        }
        if !self.extent.iter().all(|&e| e.is_finite() && e > 0.0) {
            return Err(Error::validation(format!(
                "degenerate room extent {:?}",
                self.extent
            )));
        }
        if let Some(c) = self
            .classes
            .iter()
            .find(|c| !(c.density.is_finite() && c.density > 0.0))
        {
            return Err(Error::validation(format!(
                "class {} has non-positive density",
                c.name
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) || !(self.brightness > 0.0) {
            return Err(Error::validation(
                "noise and brightness must be non-negative and finite",
            ));
        }
        for s in &self.surfaces {
            if usize::from(s.class) >= self.classes.len() {
                return Err(Error::validation(format!(
                    "surface class {} is undefined",
                    s.class
                )));
            }
            let bad = match &s.kind {
                SurfaceKind::Box { min, max } => (0..3).any(|a| !(max[a] > min[a])),
                SurfaceKind::Pole { radius, height, .. } => !(*radius > 0.0 && *height > 0.0),
                _ => false,
            };
            if bad {
                return Err(Error::validation(format!(
                    "degenerate surface {:?}",
                    s.kind
                )));
            }
        }
        Ok(())
    }

    /// Expected point count per class: surface area times class density, rounded per face.
    pub fn expected_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.surfaces {
            let density = self.classes[usize::from(s.class)].density;
            for face in faces(&s.kind, self.extent) {
                counts[usize::from(s.class)] += (face.area() * density).round() as usize;
            }
        }
        counts
    }
}

/// A rectangular patch `origin + u*a + v*b`, `u, v in [0,1]`, or a cylinder side.
enum Face {
    Rect {
        origin: [f64; 3],
        a: [f64; 3],
        b: [f64; 3],
    },
    Cylinder {
        center: [f64; 2],
        radius: f64,
        height: f64,
    },
}

impl Face {
    fn area(&self) -> f64 {
        match self {
            Face::Rect { a, b, .. } => {
                let c = [
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ];
                (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
            }
            Face::Cylinder { radius, height, .. } => 2.0 * PI * radius * height,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        match self {
            Face::Rect { origin, a, b } => {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                [0, 1, 2].map(|k| origin[k] + u * a[k] + v * b[k])
            }
            Face::Cylinder {
                center,
                radius,
                height,
            } => {
                let t: f64 = rng.random::<f64>() * 2.0 * PI;
                let z: f64 = rng.random::<f64>() * height;
                [
                    center[0] + radius * t.cos(),
                    center[1] + radius * t.sin(),
                    z,
                ]
            }
        }
    }
}

fn faces(kind: &SurfaceKind, extent: [f64; 3]) -> Vec<Face> {
    let [w, d, h] = extent;
    let rect = |origin, a, b| Face::Rect { origin, a, b };
    match kind {
        SurfaceKind::Floor => vec![rect([0.0; 3], [w, 0.0, 0.0], [0.0, d, 0.0])],
        SurfaceKind::Ceiling => vec![rect([0.0, 0.0, h], [w, 0.0, 0.0], [0.0, d, 0.0])],
        SurfaceKind::Walls => vec![
            rect([0.0; 3], [w, 0.0, 0.0], [0.0, 0.0, h]),
            rect([0.0, d, 0.0], [w, 0.0, 0.0], [0.0, 0.0, h]),
            rect([0.0; 3], [0.0, d, 0.0], [0.0, 0.0, h]),
            rect([w, 0.0, 0.0], [0.0, d, 0.0], [0.0, 0.0, h]),
        ],
        SurfaceKind::Box { min, max } => {
            let [sx, sy, sz] = [max[0] - min[0], max[1] - min[1], max[2] - min[2]];
            vec![
                rect([min[0], min[1], max[2]], [sx, 0.0, 0.0], [0.0, sy, 0.0]),
                rect(*min, [sx, 0.0, 0.0], [0.0, 0.0, sz]),
                rect([min[0], max[1], min[2]], [sx, 0.0, 0.0], [0.0, 0.0, sz]),
                rect(*min, [0.0, sy, 0.0], [0.0, 0.0, sz]),
                rect([max[0], min[1], min[2]], [0.0, sy, 0.0], [0.0, 0.0, sz]),
            ]
        }
        SurfaceKind::Pole {
            center,
            radius,
            height,
        } => vec![Face::Cylinder {
            center: *center,
            radius: *radius,
            height: *height,
        }],
    }
}

/// Samples a scene. Identical specs give bitwise-identical scans.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::validation(format!("noise: {e}")))?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for s in &spec.surfaces {
        let style = &spec.classes[usize::from(s.class)];
        let base = s.color.unwrap_or(style.color);
        let jitter = Normal::new(0.0, style.jitter.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::validation(format!("jitter: {e}")))?;
        for face in faces(&s.kind, spec.extent) {
            let n = (face.area() * style.density).round() as usize;
            for _ in 0..n {
                let p = face.sample(&mut rng);
                let p = if spec.noise_sigma > 0.0 {
                    p.map(|v| v + noise.sample(&mut rng))
                } else {
                    p
                };
                positions.push(p.map(|v| v as f32));
                let rgb = base.map(|c| {
                    let j = if style.jitter > 0.0 {
                        jitter.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (c * spec.brightness + j).round().clamp(0.0, 255.0) as u8
                });
                colors.push(rgb);
                labels.push(s.class);
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::validation(format!(
            "scene {} produced no points; extents or densities are too small",
            spec.scan_id
        )));
    }
    Ok(Scene {
        cloud: PointCloud::new(spec.scan_id.clone(), positions, Some(colors), None)?,
        truth: LabelMask::new(spec.scan_id.clone(), labels)?,
    })
}

/// Class ids of the benchmark rooms.
pub const BENCHMARK_CLASSES: [&str; 6] = ["floor", "ceiling", "wall", "box", "pole", "clutter"];

/// The small-object class: the rarest class of the benchmark.
pub const CLUTTER: u8 = 5;

const BOX: u8 = 3;
const POLE: u8 = 4;

/// Parameters of the synthetic room corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub scenes: usize,
    pub points_per_scene: usize,
    pub seed: u64,
    /// Prefix of generated scan ids.
    pub prefix: &'static str,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            scenes: 20,
            points_per_scene: 5000,
            seed: 2021,
            prefix: "room",
        }
    }
}

fn styles(density: f64) -> Vec<ClassStyle> {
    let style = |name: &str, color: [f64; 3], jitter: f64| ClassStyle {
        name: name.to_string(),
        color,
        jitter,
        density,
    };
    vec![
        style("floor", [122.0, 92.0, 62.0], 10.0),
        style("ceiling", [236.0, 234.0, 228.0], 6.0),
        style("wall", [168.0, 184.0, 200.0], 8.0),
        style("box", [72.0, 134.0, 84.0], 10.0),
        style("pole", [70.0, 70.0, 82.0], 8.0),
        style("clutter", [204.0, 44.0, 40.0], 12.0),
    ]
}

fn benchmark_spec(i: usize, spec: &BenchmarkSpec, rng: &mut ChaCha8Rng) -> SceneSpec {
    let w = rng.random_range(3.0..4.5);
    let d = rng.random_range(3.0..4.5);
    let h = rng.random_range(2.5..3.1);
    let mut surfaces = vec![
        Surface {
            kind: SurfaceKind::Floor,
            class: 0,
            color: None,
        },
        Surface {
            kind: SurfaceKind::Ceiling,
            class: 1,
            color: None,
        },
        Surface {
            kind: SurfaceKind::Walls,
            class: 2,
            color: None,
        },
    ];
    let mut tops = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let sx = rng.random_range(0.5..1.2);
        let sy = rng.random_range(0.5..1.2);
        let sz = rng.random_range(0.4..1.1);
        let x = rng.random_range(0.3..(w - sx - 0.3));
        let y = rng.random_range(0.3..(d - sy - 0.3));
        surfaces.push(Surface {
            kind: SurfaceKind::Box {
                min: [x, y, 0.0],
                max: [x + sx, y + sy, sz],
            },
            class: BOX,
            color: None,
        });
        tops.push(([x, y, sz], [sx, sy]));
    }
    for _ in 0..rng.random_range(0..=2) {
        let r = rng.random_range(0.06..0.12);
        surfaces.push(Surface {
            kind: SurfaceKind::Pole {
                center: [
                    rng.random_range(0.4..w - 0.4),
                    rng.random_range(0.4..d - 0.4),
                ],
                radius: r,
                height: h,
            },
            class: POLE,
            color: None,
        });
    }
    // small objects show up in about one room in three
    if rng.random_bool(0.35) {
        for _ in 0..rng.random_range(1..=4) {
            let s = rng.random_range(0.12..0.25);
            let (base, span) = if rng.random_bool(0.5) {
                let (origin, size) = tops[rng.random_range(0..tops.len())];
                (origin, size)
            } else {
                ([0.2, 0.2, 0.0], [w - 0.4, d - 0.4])
            };
            let x = base[0] + rng.random::<f64>() * (span[0] - s).max(0.0);
            let y = base[1] + rng.random::<f64>() * (span[1] - s).max(0.0);
            surfaces.push(Surface {
                kind: SurfaceKind::Box {
                    min: [x, y, base[2]],
                    max: [x + s, y + s, base[2] + s],
                },
                class: CLUTTER,
                color: None,
            });
        }
    }
    let mut scene = SceneSpec {
        scan_id: format!("{}_{i:03}", spec.prefix),
        extent: [w, d, h],
        classes: styles(1.0),
        surfaces,
        noise_sigma: 0.005,
        brightness: rng.random_range(0.8..1.2),
        seed: rng.random(),
    };
    let area: f64 = scene
        .surfaces
        .iter()
        .flat_map(|s| faces(&s.kind, scene.extent))
        .map(|f| f.area())
        .sum();
    let density = spec.points_per_scene as f64 / area;
    scene.classes = styles(density);
    scene
}

/// Generates the synthetic room corpus.
pub fn benchmark_scenes(spec: &BenchmarkSpec) -> Result<Vec<Scene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let specs: Vec<SceneSpec> = (0..spec.scenes)
        .map(|i| benchmark_spec(i, spec, &mut rng))
        .collect();
    specs.iter().map(generate_scene).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_room() -> SceneSpec {
        SceneSpec {
            scan_id: "floor".into(),
            extent: [1.0, 1.0, 2.0],
            classes: styles(100.0),
            surfaces: vec![Surface {
                kind: SurfaceKind::Floor,
                class: 0,
                color: None,
            }],
            noise_sigma: 0.0,
            brightness: 1.0,
            seed: 3,
        }
    }

    #[test]
    fn floor_only_room() {
        let scene = generate_scene(&floor_room()).unwrap();
        assert_eq!(scene.cloud.len(), 100);
        assert!(scene.truth.labels().iter().all(|&l| l == 0));
        assert!(scene.cloud.positions().iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&floor_room()).unwrap();
        let b = generate_scene(&floor_room()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut s = floor_room();
        s.extent = [0.0, 1.0, 1.0];
        assert!(generate_scene(&s).is_err());
        let mut s = floor_room();
        s.classes.truncate(1);
        assert!(generate_scene(&s).is_err());
        let mut s = floor_room();
        s.classes[0].density = 0.0;
        assert!(generate_scene(&s).is_err());
        let mut s = floor_room();
        s.extent = [0.01, 0.01, 1.0];
        assert!(generate_scene(&s).is_err());
    }

    #[test]
    fn benchmark_scene_sizes() {
        let scenes = benchmark_scenes(&BenchmarkSpec {
            scenes: 4,
            ..Default::default()
        })
        .unwrap();
        for s in &scenes {
            let n = s.cloud.len() as f64;
            assert!((n - 5000.0).abs() < 50.0, "{n}");
        }
    }
}
