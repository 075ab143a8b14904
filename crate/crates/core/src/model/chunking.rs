use serde::{Deserialize, Serialize};

use super::{checksum, ModelError, Sha1Digest};

/// Size bounds for content chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingPolicy {
    pub target_size: usize,
    pub min_size: usize,
    pub max_size: usize,
}

impl Default for ChunkingPolicy {
    fn default() -> Self {
        Self {
            target_size: 16 * 1024,
            min_size: 8 * 1024,
            max_size: 32 * 1024,
        }
    }
}

impl ChunkingPolicy {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.min_size == 0 || self.min_size > self.target_size || self.target_size > self.max_size {
            return Err(ModelError::InvalidPolicy(format!(
                "need 0 < min ({}) <= target ({}) <= max ({})",
                self.min_size, self.target_size, self.max_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub checksum: Sha1Digest,
    pub data: Vec<u8>,
}

impl Chunk {
    pub fn new(data: Vec<u8>) -> Self {
        Self {
            checksum: checksum(&data),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Splits `data` into fixed-size chunks of `policy.target_size`; only the
/// final chunk may be shorter. Empty input yields no chunks.
pub fn chunk_stream(data: &[u8], policy: &ChunkingPolicy) -> Vec<Chunk> {
    debug_assert!(policy.validate().is_ok());
    data.chunks(policy.target_size.max(1))
        .map(|piece| Chunk::new(piece.to_vec()))
        .collect()
}

/// One member of a multichunk: the chunk's checksum and its byte length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub checksum: Sha1Digest,
    pub length: u32,
}

/// A group of chunks stored remotely as one compressed, encrypted object.
///
/// The plaintext form is the plain concatenation of the member chunks in
/// listed order; member lengths are kept here so the chunks can be sliced
/// back out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiChunk {
    pub id: Sha1Digest,
    pub chunks: Vec<ChunkRef>,
}

impl MultiChunk {
    /// Builds the multichunk descriptor and its plaintext payload.
    /// The id is the SHA-1 over the member checksums.
    pub fn pack<'a, I>(chunks: I) -> Result<(MultiChunk, Vec<u8>), ModelError>
    where
        I: IntoIterator<Item = &'a Chunk>,
    {
        let mut refs = Vec::new();
        let mut payload = Vec::new();
        let mut ids = Vec::new();
        for chunk in chunks {
            refs.push(ChunkRef {
                checksum: chunk.checksum,
                length: chunk.len() as u32,
            });
            ids.extend_from_slice(chunk.checksum.as_bytes());
            payload.extend_from_slice(&chunk.data);
        }
        if refs.is_empty() {
            return Err(ModelError::EmptyMultiChunk);
        }
        Ok((
            MultiChunk {
                id: checksum(&ids),
                chunks: refs,
            },
            payload,
        ))
    }

    /// Slices a plaintext payload back into its member chunks, verifying
    /// every checksum.
    pub fn unpack(&self, payload: &[u8]) -> Result<Vec<Chunk>, ModelError> {
        let expected: usize = self.chunks.iter().map(|c| c.length as usize).sum();
        if expected != payload.len() {
            return Err(ModelError::CorruptMultiChunk(format!(
                "{}: payload {} bytes, members total {}",
                self.id,
                payload.len(),
                expected
            )));
        }
        let mut out = Vec::with_capacity(self.chunks.len());
        let mut pos = 0;
        for member in &self.chunks {
            let end = pos + member.length as usize;
            let chunk = Chunk::new(payload[pos..end].to_vec());
            if chunk.checksum != member.checksum {
                return Err(ModelError::CorruptMultiChunk(format!(
                    "{}: member {} does not match its checksum",
                    self.id, member.checksum
                )));
            }
            out.push(chunk);
            pos = end;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy(target: usize) -> ChunkingPolicy {
        ChunkingPolicy {
            target_size: target,
            min_size: target.clamp(1, 8192),
            max_size: target.max(32768),
        }
    }

    #[test]
    fn empty_input() {
        assert!(chunk_stream(&[], &ChunkingPolicy::default()).is_empty());
    }

    #[test]
    fn hundred_kib() {
        let data = vec![7u8; 102_400];
        let chunks = chunk_stream(&data, &ChunkingPolicy::default());
        let lens: Vec<usize> = chunks.iter().map(Chunk::len).collect();
        assert_eq!(lens, vec![16384, 16384, 16384, 16384, 16384, 16384, 4096]);
    }

    #[test]
    fn small_file_is_one_chunk() {
        let data: Vec<u8> = (0..2734u32).map(|i| (i % 251) as u8).collect();
        let chunks = chunk_stream(&data, &ChunkingPolicy::default());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].checksum, checksum(&data));
    }

    #[test]
    fn invalid_policies() {
        let bad = ChunkingPolicy { target_size: 10, min_size: 20, max_size: 30 };
        assert!(bad.validate().is_err());
        let zero = ChunkingPolicy { target_size: 0, min_size: 0, max_size: 0 };
        assert!(zero.validate().is_err());
        assert!(ChunkingPolicy::default().validate().is_ok());
    }

    #[test]
    fn pack_unpack() {
        let a = Chunk::new(b"hello".to_vec());
        let b = Chunk::new(b"world!".to_vec());
        let (mc, payload) = MultiChunk::pack([&a, &b]).unwrap();
        assert_eq!(payload, b"helloworld!");
        assert_eq!(mc.unpack(&payload).unwrap(), vec![a, b]);
        assert!(mc.unpack(b"helloworld?").is_err());
        assert!(MultiChunk::pack(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn reassembly(data in proptest::collection::vec(any::<u8>(), 0..70_000), target in 1usize..40_000) {
            let p = policy(target);
            let chunks = chunk_stream(&data, &p);
            let joined: Vec<u8> = chunks.iter().flat_map(|c| c.data.iter().copied()).collect();
            prop_assert_eq!(&joined, &data);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!(c.len() <= p.max_size);
                prop_assert!(!c.is_empty());
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.len(), p.target_size);
                }
            }
            let again: Vec<_> = chunk_stream(&data, &p).into_iter().map(|c| c.checksum).collect();
            prop_assert_eq!(again, chunks.iter().map(|c| c.checksum).collect::<Vec<_>>());
        }
    }
}
