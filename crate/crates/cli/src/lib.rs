//! `segcrowd`: researcher command-line client.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error. Under `--json`
//! every line written to stdout is one JSON object.

pub mod client;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use segcrowd_core::mask::{compare_masks, deserialize_mask, AgreementReport};
use segcrowd_core::store::{Durability, VersionKind};
use segcrowd_core::workflow::Role;
use segcrowd_server::{ApiConfig, AppState};

use client::{ApiClient, ClientError};

pub const TOKEN_ENV: &str = "SEGCROWD_TOKEN";
pub const SERVER_ENV: &str = "SEGCROWD_SERVER";

#[derive(Debug, Parser)]
#[command(name = "segcrowd", version, about = "Researcher client for the segmentation platform")]
pub struct Cli {
    /// Base URL of the server.
    #[arg(long, global = true, env = SERVER_ENV, default_value = "http://127.0.0.1:8080")]
    pub server: String,
    /// Bearer token; read from the environment when not given.
    #[arg(long, global = true, env = TOKEN_ENV, hide_env_values = true)]
    pub token: Option<String>,
    /// Line-oriented JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Continue past per-item failures.
    #[arg(long, global = true)]
    pub keep_going: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enroll every PNG file of a directory.
    Push { dir: PathBuf },
    /// Download an export into a directory, rewriting only changed files.
    Pull {
        #[arg(long, default_value = "all", value_parser = ["all", "reviewed-only"])]
        selector: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise agreement between annotators' latest manual versions.
    Stats {
        /// Images to compare; all enrolled images when omitted.
        image_ids: Vec<String>,
    },
    /// Request an active-learning batch.
    Batch {
        #[arg(long, default_value = "entropy")]
        strategy: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Assign the batch round-robin over these annotator ids.
        #[arg(long, value_delimiter = ',')]
        auto_assign: Vec<String>,
    },
    /// Make an earlier version the head again.
    Restore { image_id: String, version_no: u32 },
    /// Manage annotator accounts.
    #[command(subcommand)]
    Annotators(AnnotatorCommand),
    /// Run the server.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnnotatorCommand {
    Register {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "annotator")]
        role: Role,
    },
    List,
    Deactivate { annotator_id: String },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long)]
    pub data_root: PathBuf,
    #[arg(long, default_value = "frangi-v1")]
    pub preseg_provider: String,
    #[arg(long, default_value = "heuristic-q1")]
    pub quality_provider: String,
    /// Largest accepted request body in bytes.
    #[arg(long, default_value_t = segcrowd_server::DEFAULT_MAX_UPLOAD)]
    pub max_upload: usize,
    /// Display name of the researcher created on an empty data root.
    #[arg(long, default_value = "researcher")]
    pub bootstrap_name: String,
    /// Flush instead of fsync after each journal record.
    #[arg(long)]
    pub no_fsync: bool,
}

/// How a command failed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Operational(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Operational(e)
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Operational(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Operational(e.into())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Operational(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn client(cli: &Cli) -> Result<ApiClient, Failure> {
    let token = cli
        .token
        .clone()
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| Failure::Usage(format!("no token: pass --token or set {TOKEN_ENV}")))?;
    if !(cli.server.starts_with("http://") || cli.server.starts_with("https://")) {
        return Err(Failure::Usage(format!("server {:?} is not an http(s) URL", cli.server)));
    }
    Ok(ApiClient::new(&cli.server, Some(token))?)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Push { dir } => push(cli, dir, out, err),
        Command::Pull { selector, out: dir } => pull(cli, selector, dir, out),
        Command::Stats { image_ids } => stats(cli, image_ids, out),
        Command::Batch { strategy, k, seed, auto_assign } => batch(cli, strategy, *k, *seed, auto_assign, out),
        Command::Restore { image_id, version_no } => {
            let entry = client(cli)?.restore(image_id, *version_no)?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string(&entry).context("encoding output")?)?;
            } else {
                writeln!(out, "{} restored v{} as v{}", entry.image_id, version_no, entry.version_no)?;
            }
            Ok(())
        }
        Command::Annotators(cmd) => annotators(cli, cmd, out),
        Command::Serve(args) => serve(args, out),
    }
}

fn push(cli: &Cli, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("{} is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let api = client(cli)?;
    let mut failed = 0;
    for path in &files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let result = std::fs::read(path)
            .map_err(|e| anyhow!("cannot read: {e}"))
            .and_then(|bytes| api.enroll(bytes, &name).map_err(Into::into));
        match result {
            Ok(e) => {
                if cli.json {
                    let line = json!({"file": name, "image_id": e.record.image_id, "duplicate": e.duplicate});
                    writeln!(out, "{line}")?;
                } else {
                    let flag = if e.duplicate { "duplicate" } else { "new" };
                    writeln!(out, "{name}\t{}\t{flag}", e.record.image_id)?;
                }
            }
            Err(e) => {
                failed += 1;
                if cli.json {
                    writeln!(out, "{}", json!({"file": name, "error": format!("{e:#}")}))?;
                } else {
                    writeln!(err, "{name}\terror\t{e:#}")?;
                }
                if !cli.keep_going {
                    break;
                }
            }
        }
    }
    if failed > 0 {
        return Err(anyhow!("{failed} file(s) failed to enroll").into());
    }
    Ok(())
}

/// Counts of a pull, by what happened to each file.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct PullSummary {
    pub written: usize,
    pub unchanged: usize,
    pub removed: usize,
}

/// Directories an export owns inside the output directory.
const EXPORT_DIRS: [&str; 3] = ["images", "segmentations", "renders"];

/// Writes the entries of an export archive under `dir`. Files whose digest
/// already matches are left alone; files under the export directories that
/// the archive no longer contains are removed.
pub fn materialize(archive: &[u8], dir: &Path) -> anyhow::Result<PullSummary> {
    let mut summary = PullSummary::default();
    let mut keep = BTreeSet::new();
    let mut tar = tar::Archive::new(archive);
    for entry in tar.entries().context("reading export archive")? {
        let mut entry = entry.context("reading export archive")?;
        let rel = entry.path().context("export entry path")?.into_owned();
        if rel.is_absolute() || rel.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
            return Err(anyhow!("export entry {} escapes the output directory", rel.display()));
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data)?;
        let target = dir.join(&rel);
        keep.insert(target.clone());
        let same = std::fs::read(&target)
            .map(|old| segcrowd_core::sha256_hex(&old) == segcrowd_core::sha256_hex(&data))
            .unwrap_or(false);
        if same {
            summary.unchanged += 1;
            continue;
        }
        let parent = target.parent().expect("entries live under dir");
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let tmp = parent.join(format!(".{}.part", rel.file_name().unwrap_or_default().to_string_lossy()));
        std::fs::write(&tmp, &data).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &target).with_context(|| format!("writing {}", target.display()))?;
        summary.written += 1;
    }
    for sub in EXPORT_DIRS {
        let mut stack = vec![dir.join(sub)];
        while let Some(d) = stack.pop() {
            let Ok(entries) = std::fs::read_dir(&d) else { continue };
            for e in entries.flatten() {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                } else if !keep.contains(&p) {
                    std::fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
                    summary.removed += 1;
                }
            }
        }
    }
    Ok(summary)
}

fn pull(cli: &Cli, selector: &str, dir: &Path, out: &mut dyn Write) -> Outcome {
    let archive = client(cli)?.export(selector)?;
    let s = materialize(&archive, dir)?;
    if cli.json {
        writeln!(out, "{}", json!({"written": s.written, "unchanged": s.unchanged, "removed": s.removed}))?;
    } else {
        writeln!(out, "{} written, {} unchanged, {} removed in {}", s.written, s.unchanged, s.removed, dir.display())?;
    }
    Ok(())
}

/// Agreement between two annotators on one image.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PairStats {
    pub annotator_a: String,
    pub annotator_b: String,
    pub version_a: u32,
    pub version_b: u32,
    pub report: AgreementReport,
}

/// Latest manual version of each annotator, compared pairwise. `None` when
/// fewer than two annotators have one.
pub fn image_stats(api: &ApiClient, image_id: &str) -> anyhow::Result<Option<Vec<PairStats>>> {
    let mut latest = BTreeMap::new();
    for v in api.history(image_id)? {
        if v.kind == VersionKind::Manual {
            latest.insert(v.annotator_id.clone(), v.version_no);
        }
    }
    if latest.len() < 2 {
        return Ok(None);
    }
    let mut masks = Vec::new();
    for (annotator, &version) in &latest {
        let bytes = api.segmentation(image_id, version)?;
        let mask = deserialize_mask(&bytes).with_context(|| format!("decoding {image_id} v{version}"))?;
        masks.push((annotator.clone(), version, mask));
    }
    let mut pairs = Vec::new();
    for (i, (a, va, ma)) in masks.iter().enumerate() {
        for (b, vb, mb) in &masks[i + 1..] {
            pairs.push(PairStats {
                annotator_a: a.clone(),
                annotator_b: b.clone(),
                version_a: *va,
                version_b: *vb,
                report: compare_masks(ma, mb).with_context(|| format!("comparing on {image_id}"))?,
            });
        }
    }
    Ok(Some(pairs))
}

fn stats(cli: &Cli, image_ids: &[String], out: &mut dyn Write) -> Outcome {
    let api = client(cli)?;
    let mut ids: Vec<String> = if image_ids.is_empty() {
        api.images()?.into_iter().map(|i| i.image_id).collect()
    } else {
        image_ids.to_vec()
    };
    ids.sort();
    ids.dedup();
    for id in &ids {
        match image_stats(&api, id)? {
            None if cli.json => writeln!(out, "{}", json!({"image_id": id, "status": "n/a"}))?,
            None => writeln!(out, "{id}\tn/a")?,
            Some(pairs) => {
                for p in pairs {
                    if cli.json {
                        let mut line = serde_json::to_value(&p).context("encoding output")?;
                        line["image_id"] = json!(id);
                        writeln!(out, "{line}")?;
                        continue;
                    }
                    writeln!(
                        out,
                        "{id}\t{}:v{} vs {}:v{}\tmacro_dice={:.4}",
                        p.annotator_a, p.version_a, p.annotator_b, p.version_b, p.report.macro_dice
                    )?;
                    for (class, c) in &p.report.per_class {
                        writeln!(out, "\t{class}\tdice={:.4}\tiou={:.4}", c.dice, c.iou)?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn batch(cli: &Cli, strategy: &str, k: usize, seed: Option<u64>, assignees: &[String], out: &mut dyn Write) -> Outcome {
    let api = client(cli)?;
    let ids = api.next_batch(strategy, k, seed)?;
    let mut failed = 0;
    for (rank, id) in ids.iter().enumerate() {
        if assignees.is_empty() {
            if cli.json {
                writeln!(out, "{}", json!({"rank": rank + 1, "image_id": id}))?;
            } else {
                writeln!(out, "{id}")?;
            }
            continue;
        }
        let annotator = &assignees[rank % assignees.len()];
        match api.assign(id, annotator) {
            Ok(task) if cli.json => writeln!(
                out,
                "{}",
                json!({"rank": rank + 1, "image_id": id, "annotator_id": annotator, "task_id": task.task_id})
            )?,
            Ok(task) => writeln!(out, "{id}\t{annotator}\t{}", task.task_id)?,
            Err(e) => {
                failed += 1;
                if cli.json {
                    writeln!(out, "{}", json!({"rank": rank + 1, "image_id": id, "annotator_id": annotator, "error": e.to_string()}))?;
                } else {
                    writeln!(out, "{id}\t{annotator}\terror\t{e}")?;
                }
                if !cli.keep_going {
                    break;
                }
            }
        }
    }
    if failed > 0 {
        return Err(anyhow!("{failed} assignment(s) failed").into());
    }
    Ok(())
}

fn annotators(cli: &Cli, cmd: &AnnotatorCommand, out: &mut dyn Write) -> Outcome {
    let api = client(cli)?;
    match cmd {
        AnnotatorCommand::Register { name, role } => {
            let r = api.register(name, *role)?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string(&r).context("encoding output")?)?;
            } else {
                writeln!(out, "{}\t{}", r.annotator.annotator_id, r.token)?;
                if r.duplicate_display_name {
                    writeln!(out, "note: display name {name:?} is already in use")?;
                }
            }
        }
        AnnotatorCommand::List => {
            let mut list = api.annotators()?;
            list.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
            for a in list {
                if cli.json {
                    writeln!(out, "{}", serde_json::to_string(&a).context("encoding output")?)?;
                } else {
                    let role = serde_json::to_value(a.role).context("encoding output")?;
                    let active = if a.active { "active" } else { "inactive" };
                    writeln!(out, "{}\t{}\t{}\t{active}", a.annotator_id, role.as_str().unwrap_or_default(), a.display_name)?;
                }
            }
        }
        AnnotatorCommand::Deactivate { annotator_id } => {
            let a = api.deactivate(annotator_id)?;
            if cli.json {
                writeln!(out, "{}", serde_json::to_string(&a).context("encoding output")?)?;
            } else {
                writeln!(out, "{} deactivated", a.annotator_id)?;
            }
        }
    }
    Ok(())
}

fn serve(args: &ServeArgs, out: &mut dyn Write) -> Outcome {
    let mut config = ApiConfig::new(&args.data_root);
    config.listen = args.listen;
    config.preseg_provider = args.preseg_provider.clone();
    config.quality_provider = args.quality_provider.clone();
    config.max_upload = args.max_upload;
    config.durability = if args.no_fsync { Durability::Flush } else { Durability::Fsync };
    let state = AppState::open(&config).map_err(|e| anyhow!("cannot start: {e}"))?;
    if let Some(reg) = state.bootstrap(&args.bootstrap_name).context("bootstrapping")? {
        writeln!(out, "created researcher {} with token {}", reg.annotator.annotator_id, reg.token)?;
        writeln!(out, "the token is shown only once")?;
    }
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .with_context(|| format!("cannot listen on {}", config.listen))?;
        writeln!(out, "listening on http://{}", listener.local_addr()?)?;
        out.flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        segcrowd_server::serve_on(listener, state, shutdown).await.context("serving")?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}
