use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;

pub const METRICS_HEADER: &str = "step,stage_agents,stage_size,success_rate,loss,buffer_size,lr,eps";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub stage_agents: usize,
    pub stage_size: usize,
    pub success_rate: f64,
    pub loss: f64,
    pub buffer_size: usize,
    pub lr: f64,
    pub eps: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.6},{},{:e},{:.6}",
            self.step, self.stage_agents, self.stage_size, self.success_rate, self.loss, self.buffer_size, self.lr, self.eps
        )
    }
}

enum Sink {
    Memory,
    File(BufWriter<File>),
    Thread(Sender<String>, JoinHandle<std::io::Result<()>>),
}

/// Append-only metrics log. Lines are also kept in memory.
pub struct MetricsLog {
    sink: Sink,
    lines: Vec<String>,
}

impl MetricsLog {
    pub fn memory() -> Self {
        MetricsLog { sink: Sink::Memory, lines: Vec::new() }
    }

    fn open(path: &Path) -> std::io::Result<BufWriter<File>> {
        let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
        let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        if fresh {
            writeln!(w, "{METRICS_HEADER}")?;
        }
        Ok(w)
    }

    /// Writes on the calling thread.
    pub fn file(path: &Path) -> std::io::Result<Self> {
        Ok(MetricsLog { sink: Sink::File(Self::open(path)?), lines: Vec::new() })
    }

    /// Writes from a dedicated writer thread.
    pub fn threaded(path: &Path) -> std::io::Result<Self> {
        let mut w = Self::open(path)?;
        let (tx, rx) = channel::<String>();
        let handle = std::thread::Builder::new().name("metrics".into()).spawn(move || {
            for line in rx {
                writeln!(w, "{line}")?;
                w.flush()?;
            }
            w.flush()
        })?;
        Ok(MetricsLog { sink: Sink::Thread(tx, handle), lines: Vec::new() })
    }

    pub fn push(&mut self, row: &MetricsRow) -> std::io::Result<()> {
        let line = row.to_csv();
        match &mut self.sink {
            Sink::Memory => {}
            Sink::File(w) => {
                writeln!(w, "{line}")?;
                w.flush()?;
            }
            Sink::Thread(tx, _) => {
                // A closed channel means the writer failed; its error surfaces on close.
                let _ = tx.send(line.clone());
            }
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn close(self) -> std::io::Result<Vec<String>> {
        match self.sink {
            Sink::Memory => {}
            Sink::File(mut w) => w.flush()?,
            Sink::Thread(tx, handle) => {
                drop(tx);
                handle.join().map_err(|_| std::io::Error::other("metrics writer panicked"))??;
            }
        }
        Ok(self.lines)
    }
}
