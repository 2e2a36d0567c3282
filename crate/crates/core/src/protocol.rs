//! Client/server search protocol over a product tree.
//!
//! The client sends `SearchRequest(Enc(t))`; the server builds the tree and
//! answers `Root`. While the decrypted node is zero the client asks for the
//! children of its pivot (`Descend`) and the server answers `Children`.
//! When the pivot reaches the leaf level the client stops locally, so a
//! successful search over `P = 2^d` leaves exchanges `1 + 2d` messages after
//! the request.
//!
//! Both sides are plain state machines ([`ClientSession`], [`ServerSession`]);
//! [`run_search`] and [`serve_connection`] drive them over an [`Endpoint`].

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::he::{BackendTag, Ciphertext, Evaluator, HeContext, HeError, SecretKey};
use crate::prodtree::{build_tree, leaf_index, padded_size, CipherTree, Dataset, TreeConfig, TreeError};
use crate::transport::{tcp_endpoint, Endpoint, Role, TrafficStats, TransportError};

pub const TAG_SEARCH_REQUEST: u8 = 0;
pub const TAG_ROOT: u8 = 1;
pub const TAG_DESCEND: u8 = 2;
pub const TAG_CHILDREN: u8 = 3;
pub const TAG_NOT_FOUND: u8 = 4;
pub const TAG_ERROR: u8 = 255;

/// Error frame codes.
pub mod code {
    pub const UNEXPECTED: u16 = 1;
    pub const MALFORMED: u16 = 2;
    pub const BAD_PIVOT: u16 = 3;
    pub const DEPTH_EXHAUSTED: u16 = 4;
    pub const PARAMS: u16 = 5;
    pub const INTERNAL: u16 = 6;
}

/// Default zero threshold for the ckks backend.
pub const DEFAULT_CKKS_EPSILON: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unexpected {got} message while {state}")]
    Unexpected { state: &'static str, got: &'static str },
    #[error("pivot {pivot} is not an internal node (P = {padded})")]
    BadPivot { pivot: u64, padded: u64 },
    #[error("both children of pivot {pivot} decrypt to nonzero values ({left:e}, {right:e}) under a zero parent")]
    Inconsistent { pivot: u64, left: f64, right: f64 },
    #[error("peer reported error {code}: {detail}")]
    Remote { code: u16, detail: String },
}

impl ProtocolError {
    pub fn wire_code(&self) -> u16 {
        match self {
            ProtocolError::Malformed(_) | ProtocolError::He(HeError::Malformed(_)) => code::MALFORMED,
            ProtocolError::Unexpected { .. } => code::UNEXPECTED,
            ProtocolError::BadPivot { .. } => code::BAD_PIVOT,
            ProtocolError::Tree(TreeError::DepthExhausted { .. }) => code::DEPTH_EXHAUSTED,
            ProtocolError::He(HeError::TagMismatch { .. } | HeError::ParamsMismatch { .. })
            | ProtocolError::Tree(TreeError::ParamsMismatch { .. }) => code::PARAMS,
            _ => code::INTERNAL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    SearchRequest(Ciphertext),
    /// Root node plus the dataset size, from which the client derives `P`
    /// and recognizes padding leaves.
    Root {
        n_real: u64,
        node: Ciphertext,
    },
    Descend(u64),
    Children(Ciphertext, Ciphertext),
    NotFound,
    Error {
        code: u16,
        detail: String,
    },
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::SearchRequest(_) => "SearchRequest",
            Message::Root { .. } => "Root",
            Message::Descend(_) => "Descend",
            Message::Children(..) => "Children",
            Message::NotFound => "NotFound",
            Message::Error { .. } => "Error",
        }
    }

    pub fn encode(&self, ctx: &HeContext) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::SearchRequest(c) => {
                out.push(TAG_SEARCH_REQUEST);
                out.extend_from_slice(&ctx.ciphertext_to_bytes(c));
            }
            Message::Root { n_real, node } => {
                out.push(TAG_ROOT);
                out.extend_from_slice(&n_real.to_be_bytes());
                out.extend_from_slice(&ctx.ciphertext_to_bytes(node));
            }
            Message::Descend(pivot) => {
                out.push(TAG_DESCEND);
                out.extend_from_slice(&pivot.to_be_bytes());
            }
            Message::Children(l, r) => {
                out.push(TAG_CHILDREN);
                out.extend_from_slice(&ctx.ciphertext_to_bytes(l));
                out.extend_from_slice(&ctx.ciphertext_to_bytes(r));
            }
            Message::NotFound => out.push(TAG_NOT_FOUND),
            Message::Error { code, detail } => {
                out.push(TAG_ERROR);
                out.extend_from_slice(&code.to_be_bytes());
                out.extend_from_slice(detail.as_bytes());
            }
        }
        out
    }

    pub fn decode(ctx: &HeContext, bytes: &[u8]) -> Result<Self, ProtocolError> {
        let (&tag, body) = bytes.split_first().ok_or_else(|| ProtocolError::Malformed("empty message".into()))?;
        let exact = |n: usize| {
            if body.len() == n {
                Ok(())
            } else {
                Err(ProtocolError::Malformed(format!("tag {tag}: body of {} bytes, expected {n}", body.len())))
            }
        };
        let msg = match tag {
            TAG_SEARCH_REQUEST => Message::SearchRequest(ctx.ciphertext_from_bytes(body)?),
            TAG_ROOT => {
                if body.len() < 8 {
                    return Err(ProtocolError::Malformed("truncated root message".into()));
                }
                let n_real = u64::from_be_bytes(body[..8].try_into().unwrap());
                Message::Root { n_real, node: ctx.ciphertext_from_bytes(&body[8..])? }
            }
            TAG_DESCEND => {
                exact(8)?;
                Message::Descend(u64::from_be_bytes(body.try_into().unwrap()))
            }
            TAG_CHILDREN => {
                let (l, used) = ctx.ciphertext_from_prefix(body)?;
                Message::Children(l, ctx.ciphertext_from_bytes(&body[used..])?)
            }
            TAG_NOT_FOUND => {
                exact(0)?;
                Message::NotFound
            }
            TAG_ERROR => {
                if body.len() < 2 {
                    return Err(ProtocolError::Malformed("truncated error message".into()));
                }
                Message::Error {
                    code: u16::from_be_bytes([body[0], body[1]]),
                    detail: String::from_utf8_lossy(&body[2..]).into_owned(),
                }
            }
            other => return Err(ProtocolError::Malformed(format!("unknown message tag {other}"))),
        };
        Ok(msg)
    }
}

/// `1 + 2·log₂(n_padded)`: Root, then one Descend and one Children per level.
pub fn expected_message_count(n_padded: u64) -> u64 {
    assert!(n_padded.is_power_of_two(), "n_padded must be a power of two");
    1 + 2 * n_padded.trailing_zeros() as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZeroTest {
    /// `x == 0`; only meaningful on the plain backend.
    Exact,
    /// `|x| < ε`.
    Threshold(f64),
}

impl ZeroTest {
    pub fn default_for(tag: BackendTag) -> Self {
        match tag {
            BackendTag::Plain => ZeroTest::Exact,
            BackendTag::Ckks => ZeroTest::Threshold(DEFAULT_CKKS_EPSILON),
        }
    }

    pub fn is_zero(self, x: f64) -> bool {
        match self {
            ZeroTest::Exact => x == 0.0,
            ZeroTest::Threshold(eps) => x.abs() < eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Decrypt the left child only; go right whenever it is nonzero.
    Strict,
    /// Decrypt both children and fail when neither is zero.
    Robust,
}

impl Mode {
    pub fn default_for(tag: BackendTag) -> Self {
        match tag {
            BackendTag::Plain => Mode::Strict,
            BackendTag::Ckks => Mode::Robust,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Mode::Strict),
            "robust" => Ok(Mode::Robust),
            _ => Err(format!("unknown mode '{s}' (expected strict or robust)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(usize),
    NotFound,
}

/// What the client does next.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Send(Message),
    Done(SearchOutcome),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ClientState {
    AwaitingRoot,
    Descending,
    Done,
}

/// Client side of one search. Holds the secret key; never talks to the
/// network itself.
pub struct ClientSession<'a> {
    ctx: &'a HeContext,
    sk: &'a SecretKey,
    zero: ZeroTest,
    mode: Mode,
    state: ClientState,
    pivot: u64,
    padded: u64,
    n_real: usize,
    messages: u64,
    path: Vec<u64>,
}

impl<'a> ClientSession<'a> {
    pub fn new(ctx: &'a HeContext, sk: &'a SecretKey, zero: ZeroTest, mode: Mode) -> Result<Self, ProtocolError> {
        ctx.check_id(sk.params_id())?;
        Ok(Self {
            ctx,
            sk,
            zero,
            mode,
            state: ClientState::AwaitingRoot,
            pivot: 1,
            padded: 0,
            n_real: 0,
            messages: 0,
            path: Vec::new(),
        })
    }

    /// Messages counted so far: Root, Descend and Children frames.
    pub fn messages(&self) -> u64 {
        self.messages
    }

    /// Heap indices visited, starting at the root.
    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn padded_len(&self) -> u64 {
        self.padded
    }

    pub fn is_done(&self) -> bool {
        self.state == ClientState::Done
    }

    pub fn request(&self, target: Ciphertext) -> Message {
        Message::SearchRequest(target)
    }

    fn dec(&self, c: &Ciphertext) -> Result<f64, ProtocolError> {
        Ok(self.ctx.decrypt(self.sk, c)?.value())
    }

    fn finish(&mut self, outcome: SearchOutcome) -> Step {
        self.state = ClientState::Done;
        Step::Done(outcome)
    }

    pub fn on_message(&mut self, msg: Message) -> Result<Step, ProtocolError> {
        let state = match self.state {
            ClientState::AwaitingRoot => "awaiting root",
            ClientState::Descending => "descending",
            ClientState::Done => "done",
        };
        match (self.state, msg) {
            (_, Message::Error { code, detail }) => {
                self.state = ClientState::Done;
                Err(ProtocolError::Remote { code, detail })
            }
            (ClientState::AwaitingRoot, Message::Root { n_real, node }) => self.on_root(n_real, &node),
            (ClientState::Descending, Message::Children(l, r)) => self.on_children(&l, &r),
            (_, other) => {
                self.state = ClientState::Done;
                Err(ProtocolError::Unexpected { state, got: other.name() })
            }
        }
    }

    fn on_root(&mut self, n_real: u64, node: &Ciphertext) -> Result<Step, ProtocolError> {
        if n_real == 0 || n_real > 1 << 40 {
            return Err(ProtocolError::Malformed(format!("implausible dataset size {n_real}")));
        }
        self.messages += 1;
        self.n_real = n_real as usize;
        self.padded = padded_size(self.n_real).0 as u64;
        self.path.push(1);
        let zero = self.zero.is_zero(self.dec(node)?);
        if !zero {
            return Ok(self.finish(SearchOutcome::NotFound));
        }
        if self.padded == 1 {
            return Ok(self.finish(SearchOutcome::Found(0)));
        }
        self.state = ClientState::Descending;
        self.pivot = 1;
        self.messages += 1;
        Ok(Step::Send(Message::Descend(1)))
    }

    fn on_children(&mut self, left: &Ciphertext, right: &Ciphertext) -> Result<Step, ProtocolError> {
        self.messages += 1;
        let l = self.dec(left)?;
        let go_left = match self.mode {
            Mode::Strict => self.zero.is_zero(l),
            Mode::Robust => {
                let r = self.dec(right)?;
                match (self.zero.is_zero(l), self.zero.is_zero(r)) {
                    (true, _) => true,
                    (false, true) => false,
                    (false, false) => {
                        self.state = ClientState::Done;
                        return Err(ProtocolError::Inconsistent { pivot: self.pivot, left: l, right: r });
                    }
                }
            }
        };
        self.pivot = 2 * self.pivot + u64::from(!go_left);
        self.path.push(self.pivot);
        if self.pivot >= self.padded {
            let outcome = match leaf_index(self.pivot, self.padded, self.n_real)? {
                Some(i) => SearchOutcome::Found(i),
                None => SearchOutcome::NotFound,
            };
            return Ok(self.finish(outcome));
        }
        self.messages += 1;
        Ok(Step::Send(Message::Descend(self.pivot)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServerState {
    AwaitingRequest,
    Serving,
    Done,
}

/// Server side of one search. Owns an evaluator (public and relinearization
/// keys only) and the tree built for this session's target.
#[derive(Debug)]
pub struct ServerSession {
    eval: Evaluator,
    data: Arc<Dataset>,
    config: TreeConfig,
    state: ServerState,
    tree: Option<CipherTree>,
    messages: u64,
    build_time: Duration,
}

impl ServerSession {
    /// The session gets its own fork of `eval`, so its counters cover this
    /// session only.
    pub fn new(eval: &Evaluator, data: Arc<Dataset>, config: TreeConfig) -> Self {
        Self {
            eval: eval.fork(),
            data,
            config,
            state: ServerState::AwaitingRequest,
            tree: None,
            messages: 0,
            build_time: Duration::ZERO,
        }
    }

    pub fn state(&self) -> ServerState {
        self.state
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.eval
    }

    pub fn tree(&self) -> Option<&CipherTree> {
        self.tree.as_ref()
    }

    pub fn build_time(&self) -> Duration {
        self.build_time
    }

    /// Handles one client message. `Ok(None)` means the client ended the
    /// session.
    pub fn on_message(&mut self, msg: Message) -> Result<Option<Message>, ProtocolError> {
        let result = self.dispatch(msg);
        if result.is_err() {
            self.state = ServerState::Done;
        }
        result
    }

    fn dispatch(&mut self, msg: Message) -> Result<Option<Message>, ProtocolError> {
        match (self.state, msg) {
            (ServerState::AwaitingRequest, Message::SearchRequest(target)) => {
                let start = Instant::now();
                let tree = build_tree(&self.eval, &self.data, &target, &self.config)?;
                self.build_time = start.elapsed();
                let root = Message::Root { n_real: tree.n_real() as u64, node: tree.root().clone() };
                self.tree = Some(tree);
                self.state = ServerState::Serving;
                self.messages += 1;
                Ok(Some(root))
            }
            (ServerState::Serving, Message::Descend(pivot)) => {
                let tree = self.tree.as_ref().expect("tree built before serving");
                let padded = tree.padded_len() as u64;
                let (l, r) = tree.node_pair(pivot).map_err(|_| ProtocolError::BadPivot { pivot, padded })?;
                let reply = Message::Children(l.clone(), r.clone());
                self.messages += 2;
                Ok(Some(reply))
            }
            (ServerState::Serving, Message::NotFound) => {
                self.state = ServerState::Done;
                Ok(None)
            }
            (state, other) => Err(ProtocolError::Unexpected {
                state: match state {
                    ServerState::AwaitingRequest => "awaiting request",
                    ServerState::Serving => "serving",
                    ServerState::Done => "done",
                },
                got: other.name(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchReport {
    pub outcome: SearchOutcome,
    /// Root, Descend and Children messages; the SearchRequest is excluded.
    pub messages: u64,
    pub padded: u64,
    pub path: Vec<u64>,
    pub traffic: TrafficStats,
}

impl SearchReport {
    /// Frames actually exchanged, SearchRequest included.
    pub fn wire_messages(&self) -> u64 {
        self.messages + 1
    }
}

/// Runs one search to completion over `ep`.
pub fn run_search<S: Read + Write>(
    ep: &mut Endpoint<S>,
    ctx: &HeContext,
    sk: &SecretKey,
    target: Ciphertext,
    zero: ZeroTest,
    mode: Mode,
) -> Result<SearchReport, ProtocolError> {
    let mut session = ClientSession::new(ctx, sk, zero, mode)?;
    ep.send_frame(&session.request(target).encode(ctx))?;
    loop {
        let msg = Message::decode(ctx, &ep.recv_frame()?)?;
        match session.on_message(msg)? {
            Step::Send(reply) => ep.send_frame(&reply.encode(ctx))?,
            Step::Done(outcome) => {
                return Ok(SearchReport {
                    outcome,
                    messages: session.messages(),
                    padded: session.padded_len(),
                    path: session.path().to_vec(),
                    traffic: ep.stats(),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionReport {
    pub n_real: usize,
    pub padded: usize,
    pub messages: u64,
    pub hmul: u64,
    pub hsub: u64,
    pub build_time: Duration,
    pub traffic: TrafficStats,
}

/// Serves one connection. The peer closing the connection once the root
/// has been sent is a normal end of session; protocol violations are
/// answered with an Error frame and returned.
pub fn serve_connection<S: Read + Write>(
    ep: &mut Endpoint<S>,
    eval: &Evaluator,
    data: Arc<Dataset>,
    config: TreeConfig,
) -> Result<SessionReport, ProtocolError> {
    let ctx = Arc::clone(eval.context());
    let mut session = ServerSession::new(eval, data, config);
    loop {
        let frame = match ep.recv_frame() {
            Ok(f) => f,
            Err(TransportError::Closed) if session.state() != ServerState::AwaitingRequest => break,
            Err(e) => return Err(e.into()),
        };
        let reply = Message::decode(&ctx, &frame).and_then(|m| session.on_message(m));
        match reply {
            Ok(Some(msg)) => ep.send_frame(&msg.encode(&ctx))?,
            Ok(None) => break,
            Err(e) => {
                let detail = e.to_string();
                let _ = ep.send_frame(&Message::Error { code: e.wire_code(), detail }.encode(&ctx));
                return Err(e);
            }
        }
    }
    let counts = session.evaluator().counts();
    let tree = session.tree().expect("tree exists once serving");
    Ok(SessionReport {
        n_real: tree.n_real(),
        padded: tree.padded_len(),
        messages: session.messages(),
        hmul: counts.hmul,
        hsub: counts.hsub,
        build_time: session.build_time(),
        traffic: ep.stats(),
    })
}

/// Accepts TCP connections and serves each on its own thread. Returns after
/// `limit` connections (all joined) or runs forever when `limit` is `None`.
pub fn serve_tcp(
    listener: TcpListener,
    eval: Arc<Evaluator>,
    data: Arc<Dataset>,
    config: TreeConfig,
    timeout: Duration,
    max_frame: usize,
    limit: Option<usize>,
) -> std::io::Result<()> {
    let next_id = AtomicU64::new(1);
    thread::scope(|s| {
        for (served, conn) in listener.incoming().enumerate() {
            if limit.is_some_and(|l| served >= l) {
                break;
            }
            let stream = match conn {
                Ok(stream) => stream,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let id = next_id.fetch_add(1, Ordering::Relaxed);
            let (eval, data) = (Arc::clone(&eval), Arc::clone(&data));
            s.spawn(move || {
                let result = tcp_endpoint(stream, Role::Server, timeout).map_err(ProtocolError::from).and_then(|ep| {
                    let mut ep = ep.with_max_frame(max_frame);
                    serve_connection(&mut ep, &eval, data, config)
                });
                match result {
                    Ok(r) => log::info!(
                        "session={id} n={} n_padded={} messages={} hmul={} bytes_in={} bytes_out={} build_ms={}",
                        r.n_real,
                        r.padded,
                        r.messages,
                        r.hmul,
                        r.traffic.bytes_received,
                        r.traffic.bytes_sent,
                        r.build_time.as_millis()
                    ),
                    Err(e) => log::warn!("session={id} failed: {e}"),
                }
            });
            if limit.is_some_and(|l| served + 1 >= l) {
                break;
            }
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::{KeyPair, SchemeParams};
    use crate::transport::{duplex, DEFAULT_TIMEOUT};
    use proptest::prelude::*;

    struct Fixture {
        ev: Evaluator,
        keys: KeyPair,
    }

    fn plain() -> Fixture {
        let ctx = Arc::new(HeContext::new(SchemeParams::Plain).unwrap());
        let keys = ctx.keygen(11).unwrap();
        Fixture { ev: Evaluator::from_keys(ctx, &keys).unwrap(), keys }
    }

    impl Fixture {
        fn ctx(&self) -> &HeContext {
            self.ev.context()
        }

        fn data(&self, values: &[f64]) -> Arc<Dataset> {
            Arc::new(Dataset::encrypt(&self.ev, values).unwrap())
        }

        fn search(&self, values: &[f64], target: f64, mode: Mode) -> SearchReport {
            let data = self.data(values);
            let (a, b) = duplex(DEFAULT_TIMEOUT);
            let ev = self.ev.fork();
            let server = thread::spawn(move || {
                let mut ep = Endpoint::new(b, Role::Server);
                serve_connection(&mut ep, &ev, data, TreeConfig::default())
            });
            let mut ep = Endpoint::new(a, Role::Client);
            let t = self.ev.encrypt(target).unwrap();
            let report =
                run_search(&mut ep, self.ctx(), self.keys.secret().unwrap(), t, ZeroTest::Exact, mode).unwrap();
            drop(ep);
            let served = server.join().unwrap().unwrap();
            assert_eq!(served.messages, report.messages);
            report
        }
    }

    fn linear_scan(values: &[f64], target: f64) -> SearchOutcome {
        values.iter().position(|&v| v == target).map_or(SearchOutcome::NotFound, SearchOutcome::Found)
    }

    #[test]
    fn message_count_formula() {
        assert_eq!(expected_message_count(4), 5);
        assert_eq!(expected_message_count(1024), 21);
        assert_eq!(expected_message_count(1), 1);
    }

    #[test]
    fn codec_roundtrip_and_layout() {
        let f = plain();
        let c = f.ev.encrypt(2.0).unwrap();
        let env = f.ctx().ciphertext_to_bytes(&c);
        let msgs = [
            Message::SearchRequest(c.clone()),
            Message::Root { n_real: 3, node: c.clone() },
            Message::Descend(6),
            Message::Children(c.clone(), f.ev.encrypt(-1.0).unwrap()),
            Message::NotFound,
            Message::Error { code: 3, detail: "bad pivot".into() },
        ];
        for m in &msgs {
            assert_eq!(&Message::decode(f.ctx(), &m.encode(f.ctx())).unwrap(), m);
        }
        assert_eq!(Message::Descend(6).encode(f.ctx()), [2, 0, 0, 0, 0, 0, 0, 0, 6]);
        assert_eq!(Message::NotFound.encode(f.ctx()), [4]);
        assert_eq!(Message::Error { code: 258, detail: "x".into() }.encode(f.ctx()), [255, 1, 2, b'x']);
        let mut req = vec![0];
        req.extend_from_slice(&env);
        assert_eq!(msgs[0].encode(f.ctx()), req);
        assert!(Message::decode(f.ctx(), &[]).is_err());
        assert!(Message::decode(f.ctx(), &[2, 0, 0]).is_err());
        assert!(Message::decode(f.ctx(), &[7]).is_err());
    }

    #[test]
    fn search_examples() {
        let f = plain();
        let r = f.search(&[5.0, 3.0, 7.0, 3.0], 7.0, Mode::Strict);
        assert_eq!(r.outcome, SearchOutcome::Found(2));
        assert_eq!(r.messages, 5);
        assert_eq!(r.wire_messages(), 6);
        assert_eq!(r.path, [1, 3, 6]);
        let r = f.search(&[5.0, 3.0, 7.0, 3.0], 9.0, Mode::Strict);
        assert_eq!((r.outcome, r.messages), (SearchOutcome::NotFound, 1));
        assert_eq!(f.search(&[4.0, 4.0], 4.0, Mode::Robust).outcome, SearchOutcome::Found(0));
    }

    #[test]
    fn degenerate_trees() {
        let f = plain();
        let r = f.search(&[2.5], 2.5, Mode::Strict);
        assert_eq!((r.outcome, r.messages), (SearchOutcome::Found(0), 1));
        assert_eq!(f.search(&[2.5], 1.0, Mode::Strict).outcome, SearchOutcome::NotFound);
        // A target equal to the pad sentinel must not match padding leaves.
        assert_eq!(f.search(&[2.0, 3.0, 4.0], 1.0, Mode::Strict).outcome, SearchOutcome::NotFound);
        assert_eq!(f.search(&[2.0, 3.0, 1.0], 1.0, Mode::Robust).outcome, SearchOutcome::Found(2));
    }

    #[test]
    fn client_descent_steps() {
        let f = plain();
        let sk = f.keys.secret().unwrap();
        let enc = |v: f64| f.ev.encrypt(v).unwrap();
        let mut c = ClientSession::new(f.ctx(), sk, ZeroTest::Exact, Mode::Strict).unwrap();
        assert_eq!(c.on_message(Message::Root { n_real: 4, node: enc(0.0) }).unwrap(), Step::Send(Message::Descend(1)));
        assert_eq!(c.on_message(Message::Children(enc(8.0), enc(0.0))).unwrap(), Step::Send(Message::Descend(3)));
        assert_eq!(c.on_message(Message::Children(enc(0.0), enc(-4.0))).unwrap(), Step::Done(SearchOutcome::Found(2)));
        assert_eq!(c.messages(), 5);

        let mut c = ClientSession::new(f.ctx(), sk, ZeroTest::Exact, Mode::Robust).unwrap();
        c.on_message(Message::Root { n_real: 4, node: enc(0.0) }).unwrap();
        assert_eq!(c.on_message(Message::Children(enc(0.0), enc(0.0))).unwrap(), Step::Send(Message::Descend(2)));
        let err = c.on_message(Message::Children(enc(1.0), enc(2.0))).unwrap_err();
        assert!(matches!(err, ProtocolError::Inconsistent { pivot: 2, .. }));

        let mut c = ClientSession::new(f.ctx(), sk, ZeroTest::Exact, Mode::Strict).unwrap();
        assert_eq!(
            c.on_message(Message::Root { n_real: 3, node: enc(-336.0) }).unwrap(),
            Step::Done(SearchOutcome::NotFound)
        );
        assert_eq!(c.messages(), 1);
        assert!(matches!(c.on_message(Message::Descend(1)), Err(ProtocolError::Unexpected { .. })));
    }

    #[test]
    fn client_rejects_foreign_key() {
        let f = plain();
        let ckks = HeContext::new(SchemeParams::preset("toy-insecure").unwrap()).unwrap();
        let sk = ckks.keygen(1).unwrap();
        assert!(ClientSession::new(f.ctx(), sk.secret().unwrap(), ZeroTest::Exact, Mode::Strict).is_err());
    }

    #[test]
    fn server_state_guards() {
        let f = plain();
        let data = f.data(&[5.0, 3.0, 7.0, 3.0]);
        let mut s = ServerSession::new(&f.ev, Arc::clone(&data), TreeConfig::default());
        assert!(matches!(s.on_message(Message::Descend(1)), Err(ProtocolError::Unexpected { .. })));

        let mut s = ServerSession::new(&f.ev, Arc::clone(&data), TreeConfig::default());
        let root = s.on_message(Message::SearchRequest(f.ev.encrypt(7.0).unwrap())).unwrap().unwrap();
        let Message::Root { n_real: 4, node } = root else { panic!("expected root") };
        let sk = f.keys.secret().unwrap();
        assert_eq!(f.ctx().decrypt(sk, &node).unwrap().value(), 0.0);
        let Some(Message::Children(l, r)) = s.on_message(Message::Descend(2)).unwrap() else { panic!() };
        let tree = s.tree().unwrap();
        assert_eq!((&l, &r), (tree.node(4).unwrap(), tree.node(5).unwrap()));
        assert_eq!(s.on_message(Message::Descend(4)), Err(ProtocolError::BadPivot { pivot: 4, padded: 4 }));
        assert_eq!(s.state(), ServerState::Done);

        let mut s = ServerSession::new(&f.ev, data, TreeConfig::default());
        s.on_message(Message::SearchRequest(f.ev.encrypt(9.0).unwrap())).unwrap();
        let again = s.on_message(Message::SearchRequest(f.ev.encrypt(9.0).unwrap()));
        assert!(matches!(again, Err(ProtocolError::Unexpected { state: "serving", got: "SearchRequest" })));
    }

    #[test]
    fn server_state_holds_no_secret() {
        let f = plain();
        let mut s = ServerSession::new(&f.ev, f.data(&[1.0, 2.0]), TreeConfig::default());
        s.on_message(Message::SearchRequest(f.ev.encrypt(2.0).unwrap())).unwrap();
        let dump = format!("{s:?}").to_lowercase();
        assert!(!dump.contains("secret"));
        let secret = crate::he::KeyFile::encode(f.ctx(), &f.keys);
        let public = crate::he::KeyFile::encode(f.ctx(), &f.keys.public_only());
        // The plain secret key is the 16 bytes after the public blob.
        let sk_bytes = &secret[public.len() - 4..public.len() + 12];
        let hex: String = sk_bytes.iter().map(|b| format!("{b}, ")).collect();
        assert!(!dump.contains(hex.trim_end_matches(", ")));
    }

    #[test]
    fn server_reports_errors_to_client() {
        let ctx = Arc::new(HeContext::new(SchemeParams::preset("toy-insecure").unwrap()).unwrap());
        let keys = ctx.keygen(5).unwrap();
        let ev = Evaluator::from_keys(Arc::clone(&ctx), &keys).unwrap();
        let data = Arc::new(Dataset::encrypt(&ev, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let (a, b) = duplex(DEFAULT_TIMEOUT);
        let server_ev = ev.fork();
        let server = thread::spawn(move || {
            serve_connection(&mut Endpoint::new(b, Role::Server), &server_ev, data, TreeConfig::default())
        });
        let mut ep = Endpoint::new(a, Role::Client);
        let zero = ZeroTest::default_for(ctx.tag());
        let err = run_search(&mut ep, &ctx, keys.secret().unwrap(), ev.encrypt(1.0).unwrap(), zero, Mode::Robust)
            .unwrap_err();
        assert!(matches!(err, ProtocolError::Remote { code: code::DEPTH_EXHAUSTED, .. }));
        assert!(matches!(server.join().unwrap(), Err(ProtocolError::Tree(TreeError::DepthExhausted { .. }))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_leftmost_scan(values in proptest::collection::vec(0u8..6, 1..40), target in 0u8..7, robust in any::<bool>()) {
            let f = plain();
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let mode = if robust { Mode::Robust } else { Mode::Strict };
            let r = f.search(&values, f64::from(target), mode);
            prop_assert_eq!(r.outcome, linear_scan(&values, f64::from(target)));
            let expected = match r.outcome {
                SearchOutcome::Found(_) => expected_message_count(r.padded),
                SearchOutcome::NotFound => 1,
            };
            prop_assert_eq!(r.messages, expected);
            prop_assert_eq!(r.path[0], 1);
            for w in r.path.windows(2) {
                prop_assert!(w[1] == 2 * w[0] || w[1] == 2 * w[0] + 1);
            }
        }
    }
}
