use std::io::{BufRead, BufReader, Read};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_hesearch");

fn hesearch(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("HESEARCH_MAX_FRAME").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn setup(values: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    assert!(hesearch(dir.path(), &["keygen", "--preset", "plain", "--out", "keys", "--seed", "9"]).status.success());
    std::fs::write(dir.path().join("values.csv"), values).unwrap();
    let out =
        hesearch(dir.path(), &["encrypt", "--public-keys", "keys.pub", "--data", "values.csv", "--out", "data.hsd"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let data = dir.path().join("data.hsd");
    (dir, data)
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(dir: &Path, sessions: usize) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve", "--public-keys", "keys.pub", "--data", "data.hsd", "--listen", "127.0.0.1:0"])
            .args(["--sessions", &sessions.to_string()])
            .current_dir(dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
        Self { child, addr }
    }

    fn finish(mut self) -> String {
        assert!(self.child.wait().unwrap().success());
        let mut log = String::new();
        self.child.stderr.take().unwrap().read_to_string(&mut log).unwrap();
        log
    }
}

#[test]
fn keygen_writes_both_files_and_warns() {
    let dir = TempDir::new().unwrap();
    let out = hesearch(dir.path(), &["keygen", "--preset", "toy-insecure", "--out", "k"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("INSECURE"));
    let full = std::fs::read(dir.path().join("k")).unwrap();
    let public = std::fs::read(dir.path().join("k.pub")).unwrap();
    assert_eq!(&full[..4], b"HSK1");
    assert_eq!(&public[..4], b"HSK1");
    assert!(public.len() < full.len());
}

#[test]
fn keygen_desk_is_not_flagged() {
    let dir = TempDir::new().unwrap();
    let out = hesearch(dir.path(), &["keygen", "--preset", "desk", "--out", "k", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!text(&out.stderr).contains("INSECURE"));
}

#[test]
fn keygen_unknown_preset_lists_presets() {
    let dir = TempDir::new().unwrap();
    let out = hesearch(dir.path(), &["keygen", "--preset", "nope", "--out", "k"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("toy-insecure") && err.contains("desk"), "{err}");
    assert!(!dir.path().join("k").exists());
}

#[test]
fn encrypt_errors() {
    let (dir, data) = setup("5\n3\n7\n3\n");
    let bytes = std::fs::read(data).unwrap();
    assert_eq!(&bytes[..4], b"HSD1");
    assert_eq!(&bytes[11..15], &[0, 0, 0, 4]);

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = hesearch(dir.path(), &["encrypt", "--public-keys", "keys.pub", "--data", "empty.csv", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("dataset must be nonempty"));

    std::fs::write(dir.path().join("big.csv"), "1\n1073741824\n").unwrap();
    let out = hesearch(dir.path(), &["encrypt", "--public-keys", "keys.pub", "--data", "big.csv", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("out of range"));

    std::fs::write(dir.path().join("bad.csv"), "1\n2\nseven\n").unwrap();
    let out = hesearch(dir.path(), &["encrypt", "--public-keys", "keys.pub", "--data", "bad.csv", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"));
}

#[test]
fn serve_and_search() {
    let (dir, _) = setup("5\n3\n7\n3\n");
    let server = Server::start(dir.path(), 3);
    let found = hesearch(dir.path(), &["search", "7", "--keys", "keys", "--connect", &server.addr, "--stats"]);
    assert_eq!(found.status.code(), Some(0));
    assert_eq!(text(&found.stdout).trim(), "2");
    assert!(text(&found.stderr).contains("messages=5 messages_wire=6"));

    let missing = hesearch(dir.path(), &["search", "9", "--keys", "keys", "--connect", &server.addr]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(text(&missing.stdout).trim(), "not found");

    assert!(hesearch(dir.path(), &["keygen", "--preset", "toy-insecure", "--out", "other", "--seed", "2"])
        .status
        .success());
    let wrong = hesearch(dir.path(), &["search", "7", "--keys", "other", "--connect", &server.addr]);
    assert_eq!(wrong.status.code(), Some(2));
    assert!(text(&wrong.stderr).contains("mismatch"));

    let log = server.finish();
    assert!(log.contains("session=1 n=4 n_padded=4 messages=5"), "{log}");
}

#[test]
fn server_log_holds_no_plaintexts() {
    let values = ["123.456", "654.321", "777.125", "999.5"];
    let (dir, _) = setup(&values.join("\n"));
    let server = Server::start(dir.path(), 2);
    let out = hesearch(dir.path(), &["search", "777.125", "--keys", "keys", "--connect", &server.addr]);
    assert_eq!(text(&out.stdout).trim(), "2");
    let out = hesearch(dir.path(), &["search", "31.75", "--keys", "keys", "--connect", &server.addr]);
    assert_eq!(out.status.code(), Some(1));
    let log = server.finish();
    for v in values.iter().chain(&["31.75"]) {
        assert!(!log.contains(v), "log leaks {v}: {log}");
    }
    assert!(!log.to_lowercase().contains("secret"));
}

#[test]
fn serve_errors() {
    let (dir, data) = setup("1\n2\n");
    let mut bytes = std::fs::read(&data).unwrap();
    bytes[0] = b'X';
    std::fs::write(dir.path().join("bad.hsd"), bytes).unwrap();
    let out =
        hesearch(dir.path(), &["serve", "--public-keys", "keys.pub", "--data", "bad.hsd", "--listen", "127.0.0.1:0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("magic"));

    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = busy.local_addr().unwrap().to_string();
    let out = hesearch(dir.path(), &["serve", "--public-keys", "keys.pub", "--data", "data.hsd", "--listen", &addr]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("cannot bind"));
}

#[test]
fn frame_cap_from_environment() {
    let (dir, _) = setup("1\n2\n");
    let server = Server::start(dir.path(), 1);
    let out = Command::new(BIN)
        .args(["search", "1", "--keys", "keys", "--connect", &server.addr])
        .current_dir(dir.path())
        .env("HESEARCH_MAX_FRAME", "16")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("exceeds"));
    let mut child = server.child;
    child.wait().unwrap();
}

#[test]
fn bench_columns_follow_formulas() {
    let dir = TempDir::new().unwrap();
    let out = hesearch(dir.path(), &["bench", "--backend", "plain", "--n", "4,16,1024,3", "--out", "b.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,n_padded,backend,messages_paper,messages_wire,bytes_up,bytes_down,build_ms,search_ms,hmul_count"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let pick = |col: usize| rows.iter().map(|r| r[col]).collect::<Vec<_>>();
    assert_eq!(pick(0), ["4", "16", "1024", "3"]);
    assert_eq!(pick(1), ["4", "16", "1024", "4"]);
    assert_eq!(pick(3), ["5", "9", "21", "5"]);
    assert_eq!(pick(4), ["6", "10", "22", "6"]);
    assert_eq!(pick(9), ["3", "15", "1023", "3"]);
}
