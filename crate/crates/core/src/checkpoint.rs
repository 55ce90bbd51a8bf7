//! Binary checkpoint: static splats, deformation field and the training cameras.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "PG4D"  version:u32  splats:u32
//! grid_x grid_y grid_t features hidden1 hidden2 : u32
//! background: 3×f64   bounds min/max: 4×f64
//! cameras:u32, then per camera center 2×f64, rotation f64, zoom f64, width u32, height u32
//! params:u64, then params × f64   (splats 9·N, then field parameters)
//! crc32 of every preceding byte : u32
//! ```

use std::fs;
use std::path::Path;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::field::{Bounds, DeformationField, FieldShape};
use crate::splat::{Scene, Splat, SPLAT_PARAMS};

pub const MAGIC: &[u8; 4] = b"PG4D";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub scene: Scene,
    pub field: DeformationField,
    pub cameras: Vec<Camera>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Checkpoint(reason.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(bad("truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

impl Checkpoint {
    /// Splat parameters followed by field parameters.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut p = self.scene.to_params();
        p.extend_from_slice(&self.field.params);
        p
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.field.shape;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.scene.len())?;
        for v in [s.grid_x, s.grid_y, s.grid_t, s.features, s.hidden[0], s.hidden[1]] {
            put_u32(&mut out, v)?;
        }
        for v in self.scene.background {
            put_f64(&mut out, v);
        }
        let b = &self.field.bounds;
        for v in [b.min[0], b.min[1], b.max[0], b.max[1]] {
            put_f64(&mut out, v);
        }
        put_u32(&mut out, self.cameras.len())?;
        for c in &self.cameras {
            for v in [c.center[0], c.center[1], c.rotation, c.zoom] {
                put_f64(&mut out, v);
            }
            put_u32(&mut out, c.width)?;
            put_u32(&mut out, c.height)?;
        }
        let params = self.param_vector();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for v in params {
            put_f64(&mut out, v);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 12 {
            return Err(bad("file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(bad("CRC mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = r.usize()?;
        let shape = FieldShape {
            grid_x: r.usize()?,
            grid_y: r.usize()?,
            grid_t: r.usize()?,
            features: r.usize()?,
            hidden: [r.usize()?, r.usize()?],
        };
        shape.validate().map_err(|e| bad(e.to_string()))?;
        let background = [r.f64()?, r.f64()?, r.f64()?];
        let bounds = Bounds {
            min: [r.f64()?, r.f64()?],
            max: [r.f64()?, r.f64()?],
        };
        let ncam = r.usize()?;
        let mut cameras = Vec::with_capacity(ncam.min(1024));
        for _ in 0..ncam {
            let cam = Camera {
                center: [r.f64()?, r.f64()?],
                rotation: r.f64()?,
                zoom: r.f64()?,
                width: r.usize()?,
                height: r.usize()?,
            };
            cam.validate().map_err(|e| bad(e.to_string()))?;
            cameras.push(cam);
        }
        let count = r.u64()? as usize;
        let want = n * SPLAT_PARAMS + shape.param_count();
        if count != want {
            return Err(bad(format!("expected {want} parameters, header says {count}")));
        }
        if body.len() - r.pos != count * 8 {
            return Err(bad("parameter block length mismatch"));
        }
        let params: Vec<f64> = (0..count).map(|_| r.f64()).collect::<Result<_>>()?;
        let (sp, fp) = params.split_at(n * SPLAT_PARAMS);
        let splats = sp.chunks_exact(SPLAT_PARAMS).map(Splat::from_params).collect();
        let field = DeformationField::from_params(shape, bounds, fp.to_vec()).map_err(|e| bad(e.to_string()))?;
        Ok(Checkpoint {
            scene: Scene::new(splats, background),
            field,
            cameras,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
