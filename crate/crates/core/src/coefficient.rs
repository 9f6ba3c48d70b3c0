//! Scalar diffusion coefficients that are piecewise constant on a dyadic mesh.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SlodError};
use crate::mesh::CartesianMesh;

const BINARY_MAGIC: &[u8; 8] = b"SLODCOEF";
const CSV_HEADER: &str = "# slod coefficient v1";

/// Coefficient that is constant on every element of the mesh at `eps_level`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    dim: usize,
    eps_level: u32,
    values: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl CoefficientField {
    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        CartesianMesh::new(dim, 0)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(SlodError::Config(format!(
                "coefficient must be positive and finite, got {c}"
            )));
        }
        Ok(Self {
            dim,
            eps_level: 0,
            values: vec![c],
            alpha: c,
            beta: c,
        })
    }

    /// I.i.d. uniform values on `[alpha, beta]`, one per element of the
    /// `eps_level` mesh.
    pub fn random_checkerboard(
        dim: usize,
        eps_level: u32,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        let mesh = CartesianMesh::new(dim, eps_level)?;
        if !(alpha > 0.0 && alpha < beta && beta.is_finite()) {
            return Err(SlodError::Config(format!(
                "checkerboard bounds need 0 < alpha < beta < inf, got alpha={alpha}, beta={beta}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..mesh.num_elements())
            .map(|_| rng.random_range(alpha..=beta))
            .collect();
        Ok(Self {
            dim,
            eps_level,
            values,
            alpha,
            beta,
        })
    }

    /// Builds a field from explicit values; bounds are the value range.
    pub fn from_values(dim: usize, eps_level: u32, values: Vec<f64>) -> Result<Self> {
        let mesh = CartesianMesh::new(dim, eps_level)?;
        if values.len() != mesh.num_elements() {
            return Err(SlodError::Format(format!(
                "expected {} coefficient values, got {}",
                mesh.num_elements(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SlodError::Config("coefficient values must be positive and finite".into()));
        }
        let alpha = values.iter().copied().fold(f64::INFINITY, f64::min);
        let beta = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            dim,
            eps_level,
            values,
            alpha,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps_level(&self) -> u32 {
        self.eps_level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Value at a point of the closed unit cube; points on element faces
    /// take the value of the element above them.
    pub fn value_at(&self, x: [f64; 2]) -> f64 {
        let mesh = CartesianMesh::new(self.dim, self.eps_level).expect("validated on construction");
        let n = mesh.per_axis();
        let mut c = [0usize; 2];
        for a in 0..self.dim {
            c[a] = ((x[a] * n as f64).floor().max(0.0) as usize).min(n - 1);
        }
        self.values[mesh.element_index(c)]
    }

    /// Samples the field on every element of `fine`.
    pub fn eval_on_fine(&self, fine: &CartesianMesh) -> Result<FineCoefficient> {
        if fine.dim() != self.dim {
            return Err(SlodError::Config(format!(
                "coefficient is {}-dimensional but the mesh is {}-dimensional",
                self.dim,
                fine.dim()
            )));
        }
        if fine.level() < self.eps_level {
            return Err(SlodError::Config(format!(
                "fine level {} does not resolve the coefficient level {}",
                fine.level(),
                self.eps_level
            )));
        }
        let eps = CartesianMesh::new(self.dim, self.eps_level)?;
        let shift = fine.level() - self.eps_level;
        let values = (0..fine.num_elements())
            .map(|e| {
                let c = fine.element_coords(e);
                self.values[eps.element_index([c[0] >> shift, c[1] >> shift])]
            })
            .collect();
        Ok(FineCoefficient { mesh: *fine, values })
    }

    fn encode_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.values.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.eps_level.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&self.beta.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Hex SHA-256 of the binary encoding, used to key caches.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.encode_binary());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.encode_binary())?;
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 32 || &buf[..8] != BINARY_MAGIC {
            return Err(SlodError::Format("not a coefficient file".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        let dim = u32_at(8) as usize;
        let eps_level = u32_at(12);
        let (alpha, beta) = (f64_at(16), f64_at(24));
        let body = &buf[32..];
        if body.len() % 8 != 0 {
            return Err(SlodError::Format("truncated coefficient values".into()));
        }
        let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut field = Self::from_values(dim, eps_level, values)?;
        if field.alpha < alpha || field.beta > beta {
            return Err(SlodError::Format("coefficient values outside stored bounds".into()));
        }
        field.alpha = alpha;
        field.beta = beta;
        Ok(field)
    }

    /// CSV with a metadata line followed by one row of values per line of
    /// elements along axis 1.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        writeln!(
            w,
            "dim={},level={},alpha={},beta={}",
            self.dim, self.eps_level, self.alpha, self.beta
        )?;
        let n = 1usize << self.eps_level;
        for row in self.values.chunks(n) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl Read) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next() != Some(CSV_HEADER) {
            return Err(SlodError::Format("missing coefficient CSV header".into()));
        }
        let meta = lines
            .next()
            .ok_or_else(|| SlodError::Format("missing coefficient metadata".into()))?;
        let mut dim = None;
        let mut level = None;
        let mut alpha = None;
        let mut beta = None;
        for kv in meta.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| SlodError::Format(format!("bad metadata entry {kv:?}")))?;
            let bad = || SlodError::Format(format!("bad metadata value {kv:?}"));
            let v = v.trim();
            match k.trim() {
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
                "level" => level = Some(v.parse::<u32>().map_err(|_| bad())?),
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|_| bad())?),
                "beta" => beta = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(SlodError::Format(format!("unknown metadata key {k:?}"))),
            }
        }
        let (Some(dim), Some(level), Some(alpha), Some(beta)) = (dim, level, alpha, beta) else {
            return Err(SlodError::Format("incomplete coefficient metadata".into()));
        };
        let values = lines
            .flat_map(|l| l.split(','))
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| SlodError::Format(format!("bad coefficient value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut field = Self::from_values(dim, level, values)?;
        if field.alpha < alpha || field.beta > beta {
            return Err(SlodError::Format("coefficient values outside stored bounds".into()));
        }
        field.alpha = alpha;
        field.beta = beta;
        Ok(field)
    }

    /// Loads a field, choosing the format from the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(&mut file)
        } else {
            Self::read_binary(&mut file)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(&mut file)
        } else {
            self.write_binary(&mut file)
        }?;
        file.flush()?;
        Ok(())
    }
}

/// Coefficient values on every element of a fine mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct FineCoefficient {
    pub mesh: CartesianMesh,
    pub values: Vec<f64>,
}

impl FineCoefficient {
    /// The same field on a mesh refined by `levels`.
    pub fn refined(&self, levels: u32) -> Result<Self> {
        let fine = self.mesh.refined(levels)?;
        let values = (0..fine.num_elements())
            .map(|e| {
                let c = fine.element_coords(e);
                self.values[self.mesh.element_index([c[0] >> levels, c[1] >> levels])]
            })
            .collect();
        Ok(Self { mesh: fine, values })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mesh: self.mesh,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}
