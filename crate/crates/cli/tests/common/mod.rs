#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::thread::JoinHandle;

use segcrowd_core::mask::{serialize_mask, MaskLayer, SegmentationMask};
use segcrowd_core::store::Durability;
use segcrowd_core::vision::encode_png;
use segcrowd_core::workflow::Role;
use segcrowd_cli::client::ApiClient;
use segcrowd_server::{ApiConfig, AppState};

/// A server on an ephemeral localhost port, stopped on drop.
pub struct TestServer {
    pub url: String,
    pub state: AppState,
    pub root_token: String,
    pub dir: tempfile::TempDir,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ApiConfig::new(dir.path());
        config.durability = Durability::Flush;
        let state = AppState::open(&config).unwrap();
        let root_token = state.bootstrap("Lead").unwrap().unwrap().token;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
        let served = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                segcrowd_server::serve_on(listener, served, async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            url: format!("http://{addr}"),
            state,
            root_token,
            dir,
            shutdown: Some(tx),
            thread: Some(thread),
        }
    }

    /// Runs the CLI in-process; returns (exit code, stdout, stderr).
    pub fn cli(&self, token: &str, args: &[&str]) -> (i32, String, String) {
        let mut full = vec!["segcrowd", "--server", &self.url, "--token", token];
        full.extend_from_slice(args);
        run_cli(&full)
    }

    pub fn client(&self, token: &str) -> ApiClient {
        ApiClient::new(&self.url, Some(token.to_owned())).unwrap()
    }

    pub fn register(&self, name: &str, role: Role) -> (String, String) {
        let r = self.client(&self.root_token).register(name, role).unwrap();
        (r.annotator.annotator_id, r.token)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = segcrowd_cli::run(args.iter().copied(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// A distinct grayscale PNG per seed.
pub fn png(w: u32, h: u32, seed: u8) -> Vec<u8> {
    let samples: Vec<u8> = (0..w * h).map(|i| seed.wrapping_add((i % 251) as u8)).collect();
    encode_png(w, h, 1, &samples).unwrap()
}

pub fn write_pngs(dir: &Path, seeds: &[u8]) {
    for (i, &s) in seeds.iter().enumerate() {
        std::fs::write(dir.join(format!("img{i}.png")), png(8, 6, s)).unwrap();
    }
}

/// Two-class mask with the given pixels set on the first class.
pub fn lseg(w: u32, h: u32, on: &[(u32, u32)]) -> Vec<u8> {
    let mut a = MaskLayer::empty(w, h);
    for &(x, y) in on {
        a.set(x, y, true);
    }
    let mut m = SegmentationMask::new(w, h).unwrap();
    m.insert_named("arteriole", 0, a).unwrap();
    m.insert_named("venule", 1, MaskLayer::empty(w, h)).unwrap();
    serialize_mask(&m)
}

pub fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            if e.path().is_dir() {
                stack.push(e.path());
            } else {
                out.push(e.path().strip_prefix(dir).unwrap().display().to_string());
            }
        }
    }
    out.sort();
    out
}
