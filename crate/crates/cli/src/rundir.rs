//! Run directories and the log sink that mirrors stderr into `log.txt`.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use anyhow::{Context, Result};

pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const LOG_FILE: &str = "log.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";

static LOG_FILE_SINK: OnceLock<Arc<Mutex<Option<File>>>> = OnceLock::new();

struct Tee(Arc<Mutex<Option<File>>>);

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stderr().write_all(buf)?;
        if let Some(f) = self.0.lock().expect("log sink").as_mut() {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stderr().flush()?;
        if let Some(f) = self.0.lock().expect("log sink").as_mut() {
            f.flush()?;
        }
        Ok(())
    }
}

/// Installs the global logger once; `RUST_LOG` overrides the default level.
pub fn init_logging() {
    let sink = LOG_FILE_SINK.get_or_init(|| Arc::new(Mutex::new(None))).clone();
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(Tee(sink))))
        .format_timestamp_secs()
        .try_init();
}

fn attach_log(path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    if let Some(sink) = LOG_FILE_SINK.get() {
        *sink.lock().expect("log sink") = Some(file);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `<root>/<timestamp>-<hash8>`, with a numeric suffix if that
    /// name is taken, writes the resolved configuration snapshot and routes
    /// the log into the directory.
    pub fn create(root: &Path, snapshot: &str, short_hash: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let base = format!("{stamp}-{short_hash}");
        let mut path = root.join(&base);
        let mut k = 2;
        while path.exists() {
            path = root.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir(&path).with_context(|| format!("creating {}", path.display()))?;
        let run = RunDir { path };
        run.write(SNAPSHOT_FILE, snapshot)?;
        attach_log(&run.file(LOG_FILE))?;
        log::info!("run directory {}", run.path.display());
        Ok(run)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.file(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}
