//! C ABI for hesearch.
//!
//! Every function returns an [`HsStatus`]; on failure a message describing
//! the error is available from [`hs_last_error`] on the same thread. Objects
//! are opaque handles released with their `_free` function. Byte outputs
//! are returned as an [`HsBuffer`] owned by the caller and released with
//! [`hs_buffer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use hesearch::he::{Evaluator, HeContext, HeError, KeyFile, KeyPair, SchemeParams, PRESETS};
use hesearch::prodtree::{Dataset, TreeConfig, TreeError};
use hesearch::protocol::{
    run_search, serve_tcp, Message, Mode, ProtocolError, SearchOutcome, ServerSession, ServerState, ZeroTest,
};
use hesearch::transport::{tcp_connect, TransportError, DEFAULT_MAX_FRAME, DEFAULT_TIMEOUT};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of range, not UTF-8, or named nothing known.
    InvalidArgument = 2,
    /// Key material does not match, or a secret key is required.
    KeyMismatch = 3,
    /// Encryption, evaluation or decryption failed.
    Crypto = 4,
    /// Input bytes could not be decoded.
    Malformed = 5,
    /// The search protocol was violated or the peer reported an error.
    Protocol = 6,
    /// Connection, framing or timeout failure.
    Transport = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// Heap bytes owned by the caller.
#[repr(C)]
#[derive(Debug)]
pub struct HsBuffer {
    pub data: *mut u8,
    pub len: usize,
}

impl HsBuffer {
    fn empty() -> Self {
        Self { data: ptr::null_mut(), len: 0 }
    }

    fn from_vec(bytes: Vec<u8>) -> Self {
        if bytes.is_empty() {
            return Self::empty();
        }
        let boxed = bytes.into_boxed_slice();
        let len = boxed.len();
        Self { data: Box::into_raw(boxed).cast(), len }
    }
}

/// Outcome of a completed search.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HsSearchResult {
    pub found: bool,
    /// Leftmost matching index; zero when `found` is false.
    pub index: u64,
    /// Protocol messages excluding the initial request.
    pub messages: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

/// Key material bound to its parameter set.
pub struct HsKeys {
    ctx: Arc<HeContext>,
    keys: KeyPair,
    eval: Arc<Evaluator>,
}

/// An encrypted dataset.
pub struct HsDataset {
    data: Arc<Dataset>,
}

/// Server side of one search, driven frame by frame.
pub struct HsServer {
    ctx: Arc<HeContext>,
    session: ServerSession,
}

struct Failure {
    status: HsStatus,
    message: String,
}

impl Failure {
    fn new(status: HsStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<HeError> for Failure {
    fn from(e: HeError) -> Self {
        let status = match e {
            HeError::ParamsMismatch { .. } | HeError::MissingSecretKey | HeError::TagMismatch { .. } => {
                HsStatus::KeyMismatch
            }
            HeError::OutOfRange { .. } | HeError::NonFinite | HeError::ZeroScalar => HsStatus::InvalidArgument,
            HeError::Malformed(_) => HsStatus::Malformed,
            _ => HsStatus::Crypto,
        };
        Self::new(status, e.to_string())
    }
}

impl From<TreeError> for Failure {
    fn from(e: TreeError) -> Self {
        let status = match e {
            TreeError::He(inner) => return inner.into(),
            TreeError::Empty => HsStatus::InvalidArgument,
            TreeError::ParamsMismatch { .. } => HsStatus::KeyMismatch,
            TreeError::Malformed(_) => HsStatus::Malformed,
            _ => HsStatus::Crypto,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        let status = match &e {
            ProtocolError::Transport(_) => HsStatus::Transport,
            ProtocolError::Malformed(_) => HsStatus::Malformed,
            _ => HsStatus::Protocol,
        };
        Self::new(status, e.to_string())
    }
}

impl From<TransportError> for Failure {
    fn from(e: TransportError) -> Self {
        Self::new(HsStatus::Transport, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(HsStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HsStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

fn null(name: &str) -> Failure {
    Failure::new(HsStatus::NullPointer, format!("{name} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn bytes<'a>(data: *const u8, len: usize, name: &str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn text<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(HsStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn bundle(ctx: HeContext, keys: KeyPair) -> Result<Box<HsKeys>, Failure> {
    let ctx = Arc::new(ctx);
    let eval = Arc::new(Evaluator::from_keys(Arc::clone(&ctx), &keys)?);
    Ok(Box::new(HsKeys { ctx, keys, eval }))
}

/// Message for the most recent failure on this thread, or NULL after a
/// success. The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `buf` must be NULL or point to a buffer filled by this library that has
/// not been freed yet. The buffer is reset to empty.
#[no_mangle]
pub unsafe extern "C" fn hs_buffer_free(buf: *mut HsBuffer) {
    let Some(buf) = buf.as_mut() else { return };
    if !buf.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf.data, buf.len)));
    }
    *buf = HsBuffer::empty();
}

/// Generates a key set for a named preset ("plain", "toy-insecure", "desk",
/// "desk-1" .. "desk-8") from a deterministic seed.
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out_keys` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_keys_generate(preset: *const c_char, seed: u64, out_keys: *mut *mut HsKeys) -> HsStatus {
    guard(|| {
        let out_keys = out(out_keys, "out_keys")?;
        let name = text(preset, "preset")?;
        let params = SchemeParams::preset(name).ok_or_else(|| {
            Failure::new(HsStatus::InvalidArgument, format!("unknown preset '{name}' (known: {})", PRESETS.join(", ")))
        })?;
        let ctx = HeContext::new(params)?;
        let keys = ctx.keygen(seed)?;
        *out_keys = Box::into_raw(bundle(ctx, keys)?);
        Ok(())
    })
}

/// Reads a key file image (with or without the secret key).
///
/// # Safety
/// `data` must point to `len` readable bytes and `out_keys` be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_keys_load(data: *const u8, len: usize, out_keys: *mut *mut HsKeys) -> HsStatus {
    guard(|| {
        let out_keys = out(out_keys, "out_keys")?;
        let (ctx, keys) = KeyFile::load(bytes(data, len, "data")?)?;
        *out_keys = Box::into_raw(bundle(ctx, keys)?);
        Ok(())
    })
}

/// Serializes the keys; the secret key is included only when
/// `include_secret` is true and the handle holds one.
///
/// # Safety
/// `keys` must be a live handle and `out_buf` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_keys_save(keys: *const HsKeys, include_secret: bool, out_buf: *mut HsBuffer) -> HsStatus {
    guard(|| {
        let out_buf = out(out_buf, "out_buf")?;
        let k = deref(keys, "keys")?;
        let image = if include_secret {
            KeyFile::encode(&k.ctx, &k.keys)
        } else {
            KeyFile::encode(&k.ctx, &k.keys.public_only())
        };
        *out_buf = HsBuffer::from_vec(image);
        Ok(())
    })
}

/// # Safety
/// `keys` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_keys_has_secret(keys: *const HsKeys) -> bool {
    keys.as_ref().is_some_and(|k| k.keys.secret().is_ok())
}

/// # Safety
/// `keys` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn hs_keys_free(keys: *mut HsKeys) {
    if !keys.is_null() {
        drop(Box::from_raw(keys));
    }
}

/// Encrypts one value into a serialized ciphertext.
///
/// # Safety
/// `keys` must be a live handle and `out_buf` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_encrypt(keys: *const HsKeys, value: f64, out_buf: *mut HsBuffer) -> HsStatus {
    guard(|| {
        let out_buf = out(out_buf, "out_buf")?;
        let k = deref(keys, "keys")?;
        let c = k.eval.encrypt(value)?;
        *out_buf = HsBuffer::from_vec(k.ctx.ciphertext_to_bytes(&c));
        Ok(())
    })
}

/// Decrypts a serialized ciphertext; needs the secret key.
///
/// # Safety
/// `keys` must be a live handle, `data` point to `len` readable bytes and
/// `out_value` be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_decrypt(keys: *const HsKeys, data: *const u8, len: usize, out_value: *mut f64) -> HsStatus {
    guard(|| {
        let out_value = out(out_value, "out_value")?;
        let k = deref(keys, "keys")?;
        let c = k.ctx.ciphertext_from_bytes(bytes(data, len, "data")?)?;
        *out_value = k.ctx.decrypt(k.keys.secret()?, &c)?.value();
        Ok(())
    })
}

/// Encrypts `count` values into a dataset.
///
/// # Safety
/// `values` must point to `count` readable doubles and `out_data` be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hs_dataset_encrypt(
    keys: *const HsKeys,
    values: *const f64,
    count: usize,
    out_data: *mut *mut HsDataset,
) -> HsStatus {
    guard(|| {
        let out_data = out(out_data, "out_data")?;
        let k = deref(keys, "keys")?;
        let values = if count == 0 {
            &[][..]
        } else if values.is_null() {
            return Err(null("values"));
        } else {
            slice::from_raw_parts(values, count)
        };
        let data = Dataset::encrypt(&k.eval, values)?;
        *out_data = Box::into_raw(Box::new(HsDataset { data: Arc::new(data) }));
        Ok(())
    })
}

/// Reads a dataset file image written by [`hs_dataset_save`] or the CLI.
///
/// # Safety
/// `keys` must be a live handle, `data` point to `len` readable bytes and
/// `out_data` be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_dataset_load(
    keys: *const HsKeys,
    data: *const u8,
    len: usize,
    out_data: *mut *mut HsDataset,
) -> HsStatus {
    guard(|| {
        let out_data = out(out_data, "out_data")?;
        let k = deref(keys, "keys")?;
        let loaded = Dataset::from_bytes(&k.ctx, bytes(data, len, "data")?)?;
        *out_data = Box::into_raw(Box::new(HsDataset { data: Arc::new(loaded) }));
        Ok(())
    })
}

/// # Safety
/// Both handles must be live and `out_buf` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_dataset_save(
    dataset: *const HsDataset,
    keys: *const HsKeys,
    out_buf: *mut HsBuffer,
) -> HsStatus {
    guard(|| {
        let out_buf = out(out_buf, "out_buf")?;
        let d = deref(dataset, "dataset")?;
        let k = deref(keys, "keys")?;
        k.ctx.check_id(d.data.params_id())?;
        *out_buf = HsBuffer::from_vec(d.data.to_bytes(&k.ctx));
        Ok(())
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_dataset_len(dataset: *const HsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.data.len())
}

/// # Safety
/// `dataset` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn hs_dataset_free(dataset: *mut HsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Starts the server side of one search. `expected_gap` is the typical
/// magnitude of a non-matching difference; pass 1 to disable normalization.
/// The handle keeps its own references, so `keys` and `dataset` may be
/// freed afterwards.
///
/// # Safety
/// Both handles must be live and `out_server` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_server_new(
    keys: *const HsKeys,
    dataset: *const HsDataset,
    expected_gap: f64,
    out_server: *mut *mut HsServer,
) -> HsStatus {
    guard(|| {
        let out_server = out(out_server, "out_server")?;
        let k = deref(keys, "keys")?;
        let d = deref(dataset, "dataset")?;
        if !(expected_gap.is_finite() && expected_gap > 0.0) {
            return Err(Failure::new(HsStatus::InvalidArgument, "expected_gap must be positive"));
        }
        let session = ServerSession::new(&k.eval, Arc::clone(&d.data), TreeConfig { expected_gap });
        *out_server = Box::into_raw(Box::new(HsServer { ctx: Arc::clone(&k.ctx), session }));
        Ok(())
    })
}

/// Feeds one received frame payload to the server. On success `out_reply`
/// holds the frame to send back (empty when there is none). On failure the
/// status describes the error and `out_reply` holds an error frame for the
/// peer. `out_done` becomes true once the session has ended either way.
///
/// # Safety
/// `server` must be a live handle, `frame` point to `len` readable bytes,
/// and the two output pointers be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_server_handle(
    server: *mut HsServer,
    frame: *const u8,
    len: usize,
    out_reply: *mut HsBuffer,
    out_done: *mut bool,
) -> HsStatus {
    guard(|| {
        let out_reply = out(out_reply, "out_reply")?;
        let out_done = out(out_done, "out_done")?;
        let s = out(server, "server")?;
        *out_reply = HsBuffer::empty();
        let frame = bytes(frame, len, "frame")?;
        let result = Message::decode(&s.ctx, frame).and_then(|m| s.session.on_message(m));
        *out_done = s.session.state() == ServerState::Done;
        match result {
            Ok(reply) => {
                *out_reply = reply.map_or_else(HsBuffer::empty, |m| HsBuffer::from_vec(m.encode(&s.ctx)));
                Ok(())
            }
            Err(e) => {
                *out_done = true;
                let msg = Message::Error { code: e.wire_code(), detail: e.to_string() };
                *out_reply = HsBuffer::from_vec(msg.encode(&s.ctx));
                Err(e.into())
            }
        }
    })
}

/// # Safety
/// `server` must be NULL or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn hs_server_free(server: *mut HsServer) {
    if !server.is_null() {
        drop(Box::from_raw(server));
    }
}

/// Serves `sessions` TCP connections on `listen` (0 means forever),
/// blocking the calling thread.
///
/// # Safety
/// Both handles must be live and `listen` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_serve_tcp(
    keys: *const HsKeys,
    dataset: *const HsDataset,
    listen: *const c_char,
    expected_gap: f64,
    sessions: u64,
) -> HsStatus {
    guard(|| {
        let k = deref(keys, "keys")?;
        let d = deref(dataset, "dataset")?;
        let addr = text(listen, "listen")?;
        if !(expected_gap.is_finite() && expected_gap > 0.0) {
            return Err(Failure::new(HsStatus::InvalidArgument, "expected_gap must be positive"));
        }
        k.ctx.check_id(d.data.params_id())?;
        let listener = TcpListener::bind(addr)
            .map_err(|e| Failure::new(HsStatus::Transport, format!("cannot bind {addr}: {e}")))?;
        let limit = (sessions > 0).then_some(sessions as usize);
        let config = TreeConfig { expected_gap };
        serve_tcp(listener, Arc::clone(&k.eval), Arc::clone(&d.data), config, DEFAULT_TIMEOUT, DEFAULT_MAX_FRAME, limit)
            .map_err(|e| Failure::new(HsStatus::Transport, e.to_string()))
    })
}

/// Runs a complete search against a TCP server. `epsilon <= 0` selects the
/// backend default zero test; `robust` decrypts both children at each step.
///
/// # Safety
/// `keys` must be a live handle holding a secret key, `connect` a
/// NUL-terminated string and `out_result` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_search_tcp(
    keys: *const HsKeys,
    connect: *const c_char,
    target: f64,
    epsilon: f64,
    robust: bool,
    out_result: *mut HsSearchResult,
) -> HsStatus {
    guard(|| {
        let out_result = out(out_result, "out_result")?;
        let k = deref(keys, "keys")?;
        let addr = text(connect, "connect")?;
        let sk = k.keys.secret()?;
        let zero = if epsilon > 0.0 && epsilon.is_finite() {
            ZeroTest::Threshold(epsilon)
        } else if epsilon.is_nan() {
            return Err(Failure::new(HsStatus::InvalidArgument, "epsilon is NaN"));
        } else {
            ZeroTest::default_for(k.ctx.tag())
        };
        let mode = if robust { Mode::Robust } else { Mode::Strict };
        let request = k.eval.encrypt(target)?;
        let mut ep = tcp_connect(addr, DEFAULT_TIMEOUT)?;
        let report = run_search(&mut ep, &k.ctx, sk, request, zero, mode)?;
        let (found, index) = match report.outcome {
            SearchOutcome::Found(i) => (true, i as u64),
            SearchOutcome::NotFound => (false, 0),
        };
        *out_result = HsSearchResult {
            found,
            index,
            messages: report.messages,
            bytes_up: report.traffic.bytes_sent,
            bytes_down: report.traffic.bytes_received,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_turns_panics_into_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let status = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(status, HsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(hs_last_error()) }.to_str().unwrap().to_string();
        assert_eq!(msg, "panic: boom");
        assert_eq!(guard(|| Ok(())), HsStatus::Ok);
        assert!(hs_last_error().is_null());
    }

    #[test]
    fn buffers_own_their_bytes() {
        let mut empty = HsBuffer::from_vec(Vec::new());
        assert!(empty.data.is_null());
        unsafe { hs_buffer_free(&mut empty) };
        let mut buf = HsBuffer::from_vec(vec![1, 2, 3]);
        assert_eq!(unsafe { slice::from_raw_parts(buf.data, buf.len) }, [1, 2, 3]);
        unsafe { hs_buffer_free(&mut buf) };
        assert!(buf.data.is_null() && buf.len == 0);
        unsafe { hs_buffer_free(&mut buf) };
    }

    #[test]
    fn error_messages_drop_interior_nul() {
        set_last_error("a\0b");
        assert_eq!(unsafe { CStr::from_ptr(hs_last_error()) }.to_str().unwrap(), "a b");
    }
}
