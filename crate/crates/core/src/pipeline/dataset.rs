//! `AFPD` dataset container, version 1 (all integers little-endian):
//!
//! ```text
//! "AFPD" | u16 version | u16 endianness tag (0x0001)
//! u32 sample count | u32 height | u32 width
//! u32 length | JSON provenance
//! per sample: f32 depth * (h * w) | u8 label * (h * w)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{render_scene, NoiseDescriptor, Raster, TextureSource, TrainingExample};
use crate::rng::sample_seed;
use crate::scene::{sample_scene, GeneratorConfig};

pub const MAGIC: &[u8; 4] = b"AFPD";
pub const VERSION: u16 = 1;
pub const LITTLE_ENDIAN_TAG: u16 = 0x0001;

/// Serializable description of where blend textures come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextureSpec {
    Procedural {
        descriptor: NoiseDescriptor,
        variants: usize,
    },
    Directory {
        path: PathBuf,
        fallback: bool,
    },
}

impl Default for TextureSpec {
    fn default() -> Self {
        match TextureSource::default() {
            TextureSource::Procedural {
                descriptor,
                variants,
            } => TextureSpec::Procedural {
                descriptor,
                variants,
            },
            TextureSource::Images(_) => unreachable!("default texture source is procedural"),
        }
    }
}

impl TextureSpec {
    pub fn load(&self) -> Result<TextureSource> {
        match self {
            TextureSpec::Procedural {
                descriptor,
                variants,
            } => {
                if *variants == 0 {
                    return Err(Error::Config(
                        "procedural texture source needs at least one variant".into(),
                    ));
                }
                Ok(TextureSource::Procedural {
                    descriptor: descriptor.clone(),
                    variants: *variants,
                })
            }
            TextureSpec::Directory { path, fallback } => TextureSource::from_dir(path, *fallback),
        }
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub generator: GeneratorConfig,
    pub seed: u64,
    pub count: u64,
    pub textures: TextureSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    /// Absent for containers written by other tools.
    pub provenance: Option<Provenance>,
    pub samples: Vec<TrainingExample>,
}

/// Renders sample `index` of the dataset keyed by `seed`.
pub fn render_sample(
    config: &GeneratorConfig,
    seed: u64,
    index: u64,
    textures: &TextureSource,
) -> Result<TrainingExample> {
    let scene = sample_scene(config, sample_seed(seed, index), textures.len())?;
    render_scene(&scene, textures)
}

/// Renders `count` samples in memory.
pub fn generate_in_memory(
    config: &GeneratorConfig,
    count: usize,
    seed: u64,
    textures: &TextureSpec,
) -> Result<Dataset> {
    config.validate()?;
    let source = textures.load()?;
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| render_sample(config, seed, i, &source))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        height: config.height_px as usize,
        width: config.width_px as usize,
        provenance: Some(Provenance {
            generator: config.clone(),
            seed,
            count: count as u64,
            textures: textures.clone(),
        }),
        samples,
    })
}

fn write_header<W: Write>(
    out: &mut W,
    count: usize,
    height: usize,
    width: usize,
    provenance: &[u8],
) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&LITTLE_ENDIAN_TAG.to_le_bytes())?;
    for v in [count, height, width, provenance.len()] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    out.write_all(provenance)
}

fn write_record<W: Write>(out: &mut W, ex: &TrainingExample) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(ex.x.len() * 5);
    for &v in &ex.x.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf.extend_from_slice(&ex.y.data);
    out.write_all(&buf)
}

const CHUNK: usize = 64;

/// Renders and streams `count` samples to `path`. Rendering runs in parallel
/// chunks; records are written in index order, so the bytes depend only on
/// the inputs.
pub fn generate_dataset(
    config: &GeneratorConfig,
    count: usize,
    seed: u64,
    textures: &TextureSpec,
    path: &Path,
) -> Result<()> {
    config.validate()?;
    let source = textures.load()?;
    let provenance = serde_json::to_vec(&Provenance {
        generator: config.clone(),
        seed,
        count: count as u64,
        textures: textures.clone(),
    })?;
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    let (h, w) = (config.height_px as usize, config.width_px as usize);
    write_header(&mut out, count, h, w, &provenance).map_err(|e| Error::file(path, e))?;

    for start in (0..count).step_by(CHUNK) {
        let end = (start + CHUNK).min(count);
        let chunk = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| render_sample(config, seed, i, &source))
            .collect::<Result<Vec<_>>>()?;
        for ex in &chunk {
            write_record(&mut out, ex).map_err(|e| Error::file(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::file(path, e))
}

/// Writes an in-memory dataset (for example one assembled from real maps).
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    for ex in &dataset.samples {
        if ex.x.height != dataset.height || ex.x.width != dataset.width || !ex.x.same_shape(&ex.y) {
            return Err(Error::Shape(
                "all samples must share the dataset dimensions".into(),
            ));
        }
    }
    let provenance = match &dataset.provenance {
        Some(p) => serde_json::to_vec(p)?,
        None => b"null".to_vec(),
    };
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::file(path, e);
    write_header(
        &mut out,
        dataset.samples.len(),
        dataset.height,
        dataset.width,
        &provenance,
    )
    .map_err(io)?;
    for ex in &dataset.samples {
        write_record(&mut out, ex).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub fn read_dataset_from<R: Read>(mut r: R) -> Result<Dataset> {
    let fmt = |e: std::io::Error| Error::Format(format!("dataset I/O: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(fmt)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an AFPD dataset (bad magic)".into()));
    }
    let version = read_u16(&mut r).map_err(fmt)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported AFPD version {version}")));
    }
    let tag = read_u16(&mut r).map_err(fmt)?;
    if tag != LITTLE_ENDIAN_TAG {
        return Err(Error::Format(format!(
            "unsupported endianness tag {tag:#06x}"
        )));
    }
    let count = read_u32(&mut r).map_err(fmt)? as usize;
    let height = read_u32(&mut r).map_err(fmt)? as usize;
    let width = read_u32(&mut r).map_err(fmt)? as usize;
    let len = read_u32(&mut r).map_err(fmt)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(fmt)?;
    let provenance: Option<Provenance> = serde_json::from_slice(&json)?;

    let pixels = height * width;
    let mut samples = Vec::with_capacity(count);
    let mut depth_raw = vec![0u8; pixels * 4];
    for _ in 0..count {
        r.read_exact(&mut depth_raw).map_err(fmt)?;
        let mut labels = vec![0u8; pixels];
        r.read_exact(&mut labels).map_err(fmt)?;
        let depth = depth_raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        samples.push(TrainingExample {
            x: Raster::from_vec(height, width, depth)?,
            y: Raster::from_vec(height, width, labels)?,
            z: None,
        });
    }
    Ok(Dataset {
        height,
        width,
        provenance,
        samples,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_dataset_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_container_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.afpd");
        let cfg = GeneratorConfig::desk_scale();
        generate_dataset(&cfg, 0, 7, &TextureSpec::default(), &path).unwrap();
        let ds = read_dataset(&path).unwrap();
        assert!(ds.samples.is_empty());
        assert_eq!((ds.height, ds.width), (64, 96));
        assert_eq!(ds.provenance.unwrap().count, 0);
    }

    #[test]
    fn file_matches_in_memory_generation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.afpd");
        let cfg = GeneratorConfig::desk_scale();
        generate_dataset(&cfg, 3, 11, &TextureSpec::default(), &path).unwrap();
        let from_file = read_dataset(&path).unwrap();
        let mem = generate_in_memory(&cfg, 3, 11, &TextureSpec::default()).unwrap();
        assert_eq!(from_file.provenance, mem.provenance);
        for (a, b) in from_file.samples.iter().zip(&mem.samples) {
            assert_eq!(a.y, b.y);
            for (u, v) in a.x.data.iter().zip(&b.x.data) {
                assert_eq!(*u, *v as f32 as f64);
            }
        }
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"AFPD");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
    }

    #[test]
    fn write_read_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.afpd");
        let ds = Dataset {
            height: 2,
            width: 3,
            provenance: None,
            samples: vec![TrainingExample {
                x: Raster::from_vec(2, 3, vec![0.5, 1.0, 1.5, 2.0, 0.0, -1.0]).unwrap(),
                y: Raster::from_vec(2, 3, vec![0, 1, 2, 3, 1, 1]).unwrap(),
                z: None,
            }],
        };
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        assert!(read_dataset_from(bytes.as_slice())
            .unwrap_err()
            .to_string()
            .contains("version 9"));
        let bytes = std::fs::read(&path).unwrap();
        assert!(read_dataset_from(&bytes[..bytes.len() - 1]).is_err());

        let missing = dir.path().join("nope/x.afpd");
        assert!(matches!(read_dataset(&missing), Err(Error::File { .. })));
        assert!(matches!(
            generate_dataset(
                &GeneratorConfig::desk_scale(),
                1,
                0,
                &TextureSpec::default(),
                &missing
            ),
            Err(Error::File { .. })
        ));
    }
}
