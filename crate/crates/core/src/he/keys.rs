//! Key file format:
//! `"HSK1" | params-id length (2, BE) | params-id (UTF-8) | public | secret | relin`,
//! each key blob prefixed by its length (4, BE). Public-only files carry an
//! empty secret blob.

use super::{HeContext, HeError, KeyPair, PublicInner, PublicKey, RelinInner, RelinKey, SecretInner, SecretKey};

pub const KEY_MAGIC: &[u8; 4] = b"HSK1";

/// Reader/writer for key files.
pub struct KeyFile;

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u32).to_be_bytes());
    out.extend_from_slice(blob);
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], HeError> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| HeError::Malformed("truncated key file".into()))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

fn take_blob<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], HeError> {
    let len = u32::from_be_bytes(take(bytes, pos, 4)?.try_into().unwrap()) as usize;
    take(bytes, pos, len)
}

fn nonce(blob: &[u8]) -> Result<[u8; 16], HeError> {
    blob.try_into().map_err(|_| HeError::Malformed("plain key must be 16 bytes".into()))
}

impl KeyFile {
    /// Reads only the header and returns the parameter identifier.
    pub fn params_id(bytes: &[u8]) -> Result<String, HeError> {
        let mut pos = 0;
        if take(bytes, &mut pos, 4)? != KEY_MAGIC {
            return Err(HeError::Malformed("bad key file magic".into()));
        }
        let len = u16::from_be_bytes(take(bytes, &mut pos, 2)?.try_into().unwrap()) as usize;
        String::from_utf8(take(bytes, &mut pos, len)?.to_vec())
            .map_err(|_| HeError::Malformed("params id is not UTF-8".into()))
    }

    pub fn encode(ctx: &HeContext, keys: &KeyPair) -> Vec<u8> {
        let id = keys.params_id().as_bytes();
        let mut out = Vec::new();
        out.extend_from_slice(KEY_MAGIC);
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id);
        match &keys.public.inner {
            PublicInner::Plain(n) => put_blob(&mut out, n),
            PublicInner::Ckks(pk) => put_blob(&mut out, &ctx.ckks_ctx().public_key_bytes(pk)),
        }
        match keys.secret.as_ref().map(|s| &s.inner) {
            None => put_blob(&mut out, &[]),
            Some(SecretInner::Plain(n)) => put_blob(&mut out, n),
            Some(SecretInner::Ckks(sk)) => put_blob(&mut out, &ctx.ckks_ctx().secret_key_bytes(sk)),
        }
        match &keys.relin.inner {
            RelinInner::Plain => put_blob(&mut out, &[]),
            RelinInner::Ckks(rlk) => put_blob(&mut out, &ctx.ckks_ctx().relin_key_bytes(rlk)),
        }
        out
    }

    /// Decodes keys for an existing context; the file's params id must match.
    pub fn decode(ctx: &HeContext, bytes: &[u8]) -> Result<KeyPair, HeError> {
        let id = Self::params_id(bytes)?;
        ctx.check_id(&id)?;
        let mut pos = 4 + 2 + id.len();
        let public = take_blob(bytes, &mut pos)?;
        let secret = take_blob(bytes, &mut pos)?;
        let relin = take_blob(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(HeError::Malformed("trailing bytes in key file".into()));
        }
        let (public, secret, relin) = match ctx.ckks() {
            None => (
                PublicInner::Plain(nonce(public)?),
                if secret.is_empty() { None } else { Some(SecretInner::Plain(nonce(secret)?)) },
                RelinInner::Plain,
            ),
            Some(ckks) => (
                PublicInner::Ckks(ckks.public_key_from_bytes(public)?),
                if secret.is_empty() { None } else { Some(SecretInner::Ckks(ckks.secret_key_from_bytes(secret)?)) },
                RelinInner::Ckks(ckks.relin_key_from_bytes(relin)?),
            ),
        };
        Ok(KeyPair {
            public: PublicKey { params_id: id.clone(), inner: public },
            secret: secret.map(|inner| SecretKey { params_id: id.clone(), inner }),
            relin: RelinKey { params_id: id, inner: relin },
        })
    }

    /// Builds the context named by the file and decodes the keys under it.
    pub fn load(bytes: &[u8]) -> Result<(HeContext, KeyPair), HeError> {
        let ctx = HeContext::from_params_id(&Self::params_id(bytes)?)?;
        let keys = Self::decode(&ctx, bytes)?;
        Ok((ctx, keys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::SchemeParams;

    #[test]
    fn plain_key_file_layout() {
        let ctx = HeContext::new(SchemeParams::Plain).unwrap();
        let keys = ctx.keygen(7).unwrap();
        let bytes = KeyFile::encode(&ctx, &keys);
        assert_eq!(&bytes[..4], b"HSK1");
        assert_eq!(&bytes[4..6], &[0, 5]);
        assert_eq!(&bytes[6..11], b"plain");
        assert_eq!(bytes.len(), 11 + (4 + 16) * 2 + 4);
        let (ctx2, back) = KeyFile::load(&bytes).unwrap();
        assert_eq!(ctx2.params_id(), "plain");
        assert_eq!(back, keys);

        let public = KeyFile::encode(&ctx, &keys.public_only());
        let back = KeyFile::decode(&ctx, &public).unwrap();
        assert!(back.secret.is_none());
        assert!(matches!(back.secret(), Err(HeError::MissingSecretKey)));
    }

    #[test]
    fn ckks_key_file_roundtrip_and_mismatch() {
        let ctx = HeContext::new(SchemeParams::preset("toy-insecure").unwrap()).unwrap();
        let keys = ctx.keygen(4).unwrap();
        let bytes = KeyFile::encode(&ctx, &keys);
        let (ctx2, back) = KeyFile::load(&bytes).unwrap();
        assert_eq!(ctx2.params_id(), ctx.params_id());
        assert_eq!(back, keys);
        let plain = HeContext::new(SchemeParams::Plain).unwrap();
        assert!(matches!(KeyFile::decode(&plain, &bytes), Err(HeError::ParamsMismatch { .. })));
        assert!(KeyFile::load(&bytes[..bytes.len() - 3]).is_err());
    }
}
