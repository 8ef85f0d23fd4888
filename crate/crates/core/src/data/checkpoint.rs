use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::DataError;
use crate::nn::{DenseStack, LstmStack, Parameters, RmsProp, RmsPropConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCMU";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_TENSOR: u8 = 0;
const KIND_TEXT: u8 = 1;
const KIND_U64: u8 = 2;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockData {
    /// Row-major values with a shape descriptor.
    Tensor { dims: Vec<usize>, values: Vec<f64> },
    Text(String),
    U64(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub data: BlockData,
}

/// Ordered collection of named blocks.
///
/// Layout: magic, version (u32 LE), block count (u64 LE), then per block a
/// length-prefixed name, a kind byte and its payload; a SHA-256 digest of
/// everything before it closes the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    blocks: Vec<Block>,
}

/// Types that can write themselves into a checkpoint under a name prefix and
/// restore themselves from one.
pub trait Persist {
    fn save_into(&self, checkpoint: &mut Checkpoint, prefix: &str);
    fn load_from(&mut self, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError>;
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Replaces any existing block with the same name.
    pub fn insert(&mut self, name: impl Into<String>, data: BlockData) {
        let name = name.into();
        match self.blocks.iter_mut().find(|b| b.name == name) {
            Some(b) => b.data = data,
            None => self.blocks.push(Block { name, data }),
        }
    }

    pub fn put_tensor(&mut self, name: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        self.insert(name, BlockData::Tensor { dims, values });
    }

    pub fn put_text(&mut self, name: impl Into<String>, text: impl Into<String>) {
        self.insert(name, BlockData::Text(text.into()));
    }

    pub fn put_u64s(&mut self, name: impl Into<String>, values: Vec<u64>) {
        self.insert(name, BlockData::U64(values));
    }

    pub fn get(&self, name: &str) -> Result<&BlockData, DataError> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &b.data)
            .ok_or_else(|| DataError::MissingBlock(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b.name == name)
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64]), DataError> {
        match self.get(name)? {
            BlockData::Tensor { dims, values } => Ok((dims, values)),
            _ => Err(DataError::Malformed(format!("block {name:?} is not a tensor"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str, DataError> {
        match self.get(name)? {
            BlockData::Text(s) => Ok(s),
            _ => Err(DataError::Malformed(format!("block {name:?} is not text"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], DataError> {
        match self.get(name)? {
            BlockData::U64(v) => Ok(v),
            _ => Err(DataError::Malformed(format!("block {name:?} is not a u64 block"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u64(&mut out, self.blocks.len() as u64);
        for block in &self.blocks {
            put_u64(&mut out, block.name.len() as u64);
            out.extend_from_slice(block.name.as_bytes());
            match &block.data {
                BlockData::Tensor { dims, values } => {
                    out.push(KIND_TENSOR);
                    put_u64(&mut out, dims.len() as u64);
                    dims.iter().for_each(|&d| put_u64(&mut out, d as u64));
                    values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
                }
                BlockData::Text(s) => {
                    out.push(KIND_TEXT);
                    put_u64(&mut out, s.len() as u64);
                    out.extend_from_slice(s.as_bytes());
                }
                BlockData::U64(v) => {
                    out.push(KIND_U64);
                    put_u64(&mut out, v.len() as u64);
                    v.iter().for_each(|&x| put_u64(&mut out, x));
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(DataError::Malformed("missing PCMU magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(DataError::UnsupportedVersion(version));
        }
        if bytes.len() < 8 + DIGEST_LEN {
            return Err(DataError::Checksum);
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(DataError::Checksum);
        }
        let mut r = Reader { buf: body, pos: 8 };
        let n = r.u64()?;
        let mut blocks = Vec::new();
        for _ in 0..n {
            let name_len = r.len()?;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| DataError::Malformed("block name is not UTF-8".into()))?;
            let data = match r.take(1)?[0] {
                KIND_TENSOR => {
                    let nd = r.len()?;
                    let dims = (0..nd).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
                    let count = dims
                        .iter()
                        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                        .ok_or_else(|| DataError::Malformed("tensor too large".into()))?;
                    let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
                    BlockData::Tensor { dims, values }
                }
                KIND_TEXT => {
                    let len = r.len()?;
                    let s = String::from_utf8(r.take(len)?.to_vec())
                        .map_err(|_| DataError::Malformed(format!("text block {name:?} is not UTF-8")))?;
                    BlockData::Text(s)
                }
                KIND_U64 => {
                    let len = r.len()?;
                    BlockData::U64((0..len).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?)
                }
                k => return Err(DataError::Malformed(format!("unknown block kind {k}"))),
            };
            blocks.push(Block { name, data });
        }
        if r.pos != body.len() {
            return Err(DataError::Malformed("trailing bytes after last block".into()));
        }
        Ok(Self { blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| DataError::Malformed("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, DataError> {
        usize::try_from(self.u64()?).map_err(|_| DataError::Malformed("length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes every parameter slice as a 1-d tensor `{prefix}/{i}`.
pub fn save_params<P: Parameters>(params: &P, checkpoint: &mut Checkpoint, prefix: &str) {
    for (i, s) in params.param_slices().iter().enumerate() {
        checkpoint.put_tensor(format!("{prefix}/{i}"), vec![s.len()], s.to_vec());
    }
}

/// Restores parameter slices written by [`save_params`]; shapes must match.
pub fn load_params<P: Parameters>(params: &mut P, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError> {
    for (i, s) in params.param_slices_mut().into_iter().enumerate() {
        let name = format!("{prefix}/{i}");
        let (_, values) = checkpoint.tensor(&name)?;
        if values.len() != s.len() {
            return Err(DataError::Malformed(format!(
                "block {name:?} holds {} values, expected {}",
                values.len(),
                s.len()
            )));
        }
        s.copy_from_slice(values);
    }
    if checkpoint.contains(&format!("{prefix}/{}", params.param_slices().len())) {
        return Err(DataError::Malformed(format!("{prefix}: more parameter blocks than the network has")));
    }
    Ok(())
}

impl Persist for DenseStack {
    fn save_into(&self, checkpoint: &mut Checkpoint, prefix: &str) {
        save_params(self, checkpoint, prefix);
    }

    fn load_from(&mut self, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError> {
        load_params(self, checkpoint, prefix)
    }
}

impl Persist for LstmStack {
    fn save_into(&self, checkpoint: &mut Checkpoint, prefix: &str) {
        save_params(self, checkpoint, prefix);
    }

    fn load_from(&mut self, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError> {
        load_params(self, checkpoint, prefix)
    }
}

impl Persist for RmsProp {
    fn save_into(&self, checkpoint: &mut Checkpoint, prefix: &str) {
        let c = &self.config;
        checkpoint.put_tensor(format!("{prefix}/config"), vec![3], vec![c.learning_rate, c.decay, c.epsilon]);
        for (i, a) in self.accumulators().iter().enumerate() {
            checkpoint.put_tensor(format!("{prefix}/accum/{i}"), vec![a.len()], a.clone());
        }
        checkpoint.put_u64s(format!("{prefix}/n_accum"), vec![self.accumulators().len() as u64]);
    }

    fn load_from(&mut self, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError> {
        let (_, c) = checkpoint.tensor(&format!("{prefix}/config"))?;
        if c.len() != 3 {
            return Err(DataError::Malformed(format!("{prefix}/config must hold 3 values")));
        }
        let n = checkpoint.u64s(&format!("{prefix}/n_accum"))?.first().copied().unwrap_or(0) as usize;
        let accum = (0..n)
            .map(|i| checkpoint.tensor(&format!("{prefix}/accum/{i}")).map(|(_, v)| v.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let shapes_match = accum.len() == self.accumulators().len()
            && accum.iter().zip(self.accumulators()).all(|(a, b)| a.len() == b.len());
        if !shapes_match {
            return Err(DataError::Malformed(format!("{prefix}: optimizer state does not match network")));
        }
        let config = RmsPropConfig {
            learning_rate: c[0],
            decay: c[1],
            epsilon: c[2],
        };
        *self = RmsProp::from_parts(config, accum);
        Ok(())
    }
}

impl Persist for ChaCha8Rng {
    fn save_into(&self, checkpoint: &mut Checkpoint, prefix: &str) {
        let seed = self.get_seed();
        let mut words: Vec<u64> = seed.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        let pos = self.get_word_pos();
        words.push(self.get_stream());
        words.push(pos as u64);
        words.push((pos >> 64) as u64);
        checkpoint.put_u64s(format!("{prefix}/chacha8"), words);
    }

    fn load_from(&mut self, checkpoint: &Checkpoint, prefix: &str) -> Result<(), DataError> {
        use rand::SeedableRng;
        let w = checkpoint.u64s(&format!("{prefix}/chacha8"))?;
        if w.len() != 7 {
            return Err(DataError::Malformed(format!("{prefix}/chacha8 must hold 7 words")));
        }
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_mut(8).zip(&w[..4]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(w[4]);
        rng.set_word_pos(u128::from(w[5]) | (u128::from(w[6]) << 64));
        *self = rng;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Direction};
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.put_tensor("w", vec![2, 3], vec![1.0, -2.5, f64::MIN_POSITIVE, 0.1, 1e300, -0.0]);
        ck.put_text("config", "horizon = 96\n");
        ck.put_u64s("counters", vec![0, u64::MAX, 42]);
        ck
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"PCMU");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let (_, v) = back.tensor("w").unwrap();
        assert_eq!(v[5].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() - 40, 20, 9] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(DataError::Checksum)), "cut {cut}");
        }
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = sample().to_bytes();
        bytes[30] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(DataError::Checksum)));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(DataError::UnsupportedVersion(v)) if v == CHECKPOINT_VERSION + 1
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(DataError::Malformed(_))));
    }

    #[test]
    fn networks_forward_bit_exactly_after_reload() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseStack::new(&[2, 64, 64, 9], Activation::Relu, Activation::Linear, &mut rng);
        let lstm = LstmStack::new(1, 5, 2, Direction::Bidirectional, &mut rng);
        let mut ck = Checkpoint::new();
        dense.save_into(&mut ck, "q");
        lstm.save_into(&mut ck, "h");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        let mut other = ChaCha8Rng::seed_from_u64(99);
        let mut dense2 = DenseStack::new(&[2, 64, 64, 9], Activation::Relu, Activation::Linear, &mut other);
        let mut lstm2 = LstmStack::new(1, 5, 2, Direction::Bidirectional, &mut other);
        dense2.load_from(&loaded, "q").unwrap();
        lstm2.load_from(&loaded, "h").unwrap();

        let x = [0.37, -1.2];
        let a = dense.predict(&x).unwrap();
        let b = dense2.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        let seq: Vec<Vec<f64>> = (0..7).map(|t| vec![t as f64 * 0.3]).collect();
        let a = lstm.predict(&seq).unwrap();
        let b = lstm2.predict(&seq).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseStack::new(&[2, 4, 3], Activation::Relu, Activation::Linear, &mut rng);
        let mut wrong = DenseStack::new(&[2, 5, 3], Activation::Relu, Activation::Linear, &mut rng);
        let mut ck = Checkpoint::new();
        dense.save_into(&mut ck, "q");
        assert!(wrong.load_from(&ck, "q").is_err());
    }

    #[test]
    fn optimizer_and_rng_resume_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = DenseStack::new(&[2, 3, 2], Activation::Relu, Activation::Linear, &mut rng);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &net);
        let mut grads = net.zeros_like();
        grads.param_slices_mut().iter_mut().for_each(|s| s.iter_mut().for_each(|g| *g = 0.3));
        opt.apply(&mut net, &grads).unwrap();
        let _: u64 = rng.random();

        let mut ck = Checkpoint::new();
        opt.save_into(&mut ck, "opt");
        rng.save_into(&mut ck, "rng");
        let ck = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        let mut opt2 = RmsProp::new(RmsPropConfig::with_learning_rate(1.0), &net);
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        opt2.load_from(&ck, "opt").unwrap();
        rng2.load_from(&ck, "rng").unwrap();
        assert_eq!(opt, opt2);
        let a: Vec<u64> = (0..10).map(|_| rng.random()).collect();
        let b: Vec<u64> = (0..10).map(|_| rng2.random()).collect();
        assert_eq!(a, b);
    }
}
