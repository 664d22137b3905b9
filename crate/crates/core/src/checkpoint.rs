//! Versioned model checkpoints.
//!
//! A checkpoint is a short UTF-8 header followed by a little-endian `f64`
//! payload:
//!
//! ```text
//! dreim-checkpoint 1
//! dim 64
//! layers 3
//! features 2
//! iteration 50000
//! episodes 5100
//! val_return 0.1234
//! rng_seed 1
//! adam_step 50000          (or "adam none")
//! adam_hyper 0.0001 0.9 0.999 0.00000001
//! tensor w1 2 64
//! ...
//! end
//! <payload>
//! ```
//!
//! Tensors appear in the payload in header order, row-major. Floats in the
//! header use the shortest round-trip representation, so save/load is bit exact.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;

use crate::encoder::{EncoderParams, FEATURES};
use crate::error::{Error, Result};
use crate::qnet::{Adam, DecoderParams, QNetwork};

pub const MAGIC: &str = "dreim-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

const TENSOR_NAMES: [&str; 5] = ["w1", "w2", "w3", "w4", "w5"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub iteration: u64,
    pub episodes: u64,
    pub val_return: Option<f64>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: QNetwork,
    pub adam: Option<Adam>,
    pub meta: TrainingMeta,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Inference-only checkpoint.
    pub fn from_network(network: QNetwork) -> Self {
        Checkpoint {
            network,
            adam: None,
            meta: TrainingMeta { iteration: 0, episodes: 0, val_return: None, rng_seed: 0 },
        }
    }

    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> =
            TENSOR_NAMES.iter().map(|s| s.to_string()).zip(self.network.tensors()).collect();
        if let Some(adam) = &self.adam {
            for (prefix, set) in [("m", &adam.m), ("v", &adam.v)] {
                for (name, t) in TENSOR_NAMES.iter().zip(set.tensors()) {
                    out.push((format!("adam_{prefix}_{name}"), t));
                }
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        self.network.validate()?;
        let m = &self.meta;
        writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(out, "dim {}", self.network.dim())?;
        writeln!(out, "layers {}", self.network.layers)?;
        writeln!(out, "features {FEATURES}")?;
        writeln!(out, "iteration {}", m.iteration)?;
        writeln!(out, "episodes {}", m.episodes)?;
        match m.val_return {
            Some(v) => writeln!(out, "val_return {v:?}")?,
            None => writeln!(out, "val_return none")?,
        }
        writeln!(out, "rng_seed {}", m.rng_seed)?;
        match &self.adam {
            Some(a) => {
                writeln!(out, "adam_step {}", a.step)?;
                writeln!(out, "adam_hyper {:?} {:?} {:?} {:?}", a.lr, a.beta1, a.beta2, a.eps)?;
            }
            None => writeln!(out, "adam none")?,
        }
        let tensors = self.tensors();
        for (name, t) in &tensors {
            writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols())?;
        }
        writeln!(out, "end")?;
        for (_, t) in &tensors {
            for x in t.iter() {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header: Vec<(String, Vec<String>)> = Vec::new();
        let mut line = String::new();
        loop {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            let mut parts = line.split_whitespace().map(str::to_string);
            let key = parts.next().ok_or_else(|| bad("blank header line"))?;
            if key == "end" {
                break;
            }
            header.push((key, parts.collect()));
            if header.len() > 64 {
                return Err(bad("header too long"));
            }
        }

        let mut fields = header.iter();
        let (magic, version) = fields.next().ok_or_else(|| bad("empty header"))?;
        if magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version: u32 = parse_one(version, "version")?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}, expected {FORMAT_VERSION}")));
        }

        let get = |key: &str| -> Result<&Vec<String>> {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v)
                .ok_or_else(|| bad(format!("missing `{key}`")))
        };
        let dim: usize = parse_one(get("dim")?, "dim")?;
        let layers: usize = parse_one(get("layers")?, "layers")?;
        let features: usize = parse_one(get("features")?, "features")?;
        if features != FEATURES {
            return Err(bad(format!("feature count {features}, expected {FEATURES}")));
        }
        let val = get("val_return")?;
        let val_return = if val.len() == 1 && val[0] == "none" { None } else { Some(parse_one(val, "val_return")?) };
        let meta = TrainingMeta {
            iteration: parse_one(get("iteration")?, "iteration")?,
            episodes: parse_one(get("episodes")?, "episodes")?,
            val_return,
            rng_seed: parse_one(get("rng_seed")?, "rng_seed")?,
        };
        let adam_hyper = if header.iter().any(|(k, _)| k == "adam") {
            None
        } else {
            let step: u64 = parse_one(get("adam_step")?, "adam_step")?;
            let h = get("adam_hyper")?;
            if h.len() != 4 {
                return Err(bad("adam_hyper needs 4 values"));
            }
            let p = |i: usize| h[i].parse::<f64>().map_err(|_| bad("bad adam_hyper value"));
            Some((step, p(0)?, p(1)?, p(2)?, p(3)?))
        };

        let shapes: Vec<(String, usize, usize)> = header
            .iter()
            .filter(|(k, _)| k == "tensor")
            .map(|(_, v)| {
                if v.len() != 3 {
                    return Err(bad("tensor line needs name rows cols"));
                }
                let r = v[1].parse().map_err(|_| bad("bad tensor rows"))?;
                let c = v[2].parse().map_err(|_| bad("bad tensor cols"))?;
                Ok((v[0].clone(), r, c))
            })
            .collect::<Result<_>>()?;

        let mut read_tensor = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
            let mut buf = vec![0u8; rows * cols * 8];
            input.read_exact(&mut buf).map_err(|_| bad(format!("payload truncated in `{name}`")))?;
            let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Ok(Array2::from_shape_vec((rows, cols), data).expect("length matches shape"))
        };

        let expected = |name: &str| -> (usize, usize) {
            match name.trim_start_matches("adam_m_").trim_start_matches("adam_v_") {
                "w1" => (FEATURES, dim),
                "w2" | "w3" => (dim, dim / 2),
                _ => (dim, 1),
            }
        };
        let mut names: Vec<String> = TENSOR_NAMES.iter().map(|s| s.to_string()).collect();
        if adam_hyper.is_some() {
            for prefix in ["m", "v"] {
                names.extend(TENSOR_NAMES.iter().map(|n| format!("adam_{prefix}_{n}")));
            }
        }
        if shapes.len() != names.len() || shapes.iter().zip(&names).any(|(s, n)| &s.0 != n) {
            return Err(bad("unexpected tensor list"));
        }
        let mut loaded = Vec::with_capacity(shapes.len());
        for (name, r, c) in &shapes {
            if (*r, *c) != expected(name) {
                return Err(bad(format!("tensor `{name}` has shape {r}x{c}, expected {:?}", expected(name))));
            }
            loaded.push(read_tensor(name, *r, *c)?);
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }

        let mut it = loaded.into_iter();
        let mut net = || -> QNetwork {
            let mut take = || it.next().expect("tensor count checked");
            let encoder = EncoderParams { w1: take(), w2: take(), w3: take() };
            let decoder = DecoderParams { w4: take(), w5: take() };
            QNetwork { encoder, decoder, layers }
        };
        let network = net();
        let adam = match adam_hyper {
            Some((step, lr, beta1, beta2, eps)) => {
                let m = net();
                let v = net();
                Some(Adam { lr, beta1, beta2, eps, step, m, v })
            }
            None => None,
        };
        network.validate()?;
        Ok(Checkpoint { network, adam, meta })
    }
}

fn parse_one<T: std::str::FromStr>(values: &[String], key: &str) -> Result<T> {
    match values {
        [v] => v.parse().map_err(|_| bad(format!("bad value for `{key}`"))),
        _ => Err(bad(format!("`{key}` needs exactly one value"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sample(with_adam: bool) -> Checkpoint {
        let network = QNetwork::init(6, 2, 0.3, &mut seeded(9)).unwrap();
        let mut adam = Adam::new(&network, 1e-4);
        adam.step = 17;
        adam.m.encoder.w1[[0, 1]] = 1.0 / 3.0;
        adam.v.decoder.w5[[2, 0]] = 7e-300;
        Checkpoint {
            network,
            adam: with_adam.then_some(adam),
            meta: TrainingMeta { iteration: 300, episodes: 31, val_return: Some(0.1 + 0.2), rng_seed: 5 },
        }
    }

    #[test]
    fn roundtrip_bit_exact() {
        for with_adam in [false, true] {
            let ck = sample(with_adam);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::read_from(&bytes[..]).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let bytes = sample(false).to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes).replacen("dreim-checkpoint 1", "dreim-checkpoint 2", 1);
        let err = Checkpoint::read_from(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let bytes = sample(true).to_bytes().unwrap();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::read_from(&longer[..]).is_err());
        assert!(Checkpoint::read_from(&b"hello\nend\n"[..]).is_err());
    }
}
