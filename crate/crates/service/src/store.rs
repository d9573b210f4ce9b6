//! Job records and their on-disk persistence.
//!
//! Each job lives in `<data-dir>/<id>.json`. The map of jobs is the only
//! shared mutable state; every write to it, and to disk, happens under its
//! lock.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use anyhow::{Context, Result};
use bandit_design::config::RunConfig;
use bandit_design::objective::{DesignPoint, DesignRecommendation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// Power and reward curve of one policy parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub phi: f64,
    /// `beta[t - 1]` is the estimated Type-II error after `t` draws.
    pub beta: Vec<f64>,
    pub mean_reward: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub feasible_set: Vec<DesignPoint>,
    pub curves: Vec<CurveRecord>,
    pub recommendation: DesignRecommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub status: JobStatus,
    pub config: RunConfig,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Content address of a config: SHA-256 of its canonical JSON.
pub fn job_id(config: &RunConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Entry {
    record: JobRecord,
    /// Bits of the progress fraction; nonnegative floats order like their
    /// bits, so `fetch_max` keeps it monotone.
    progress: Arc<AtomicU64>,
}

impl Entry {
    fn snapshot(&self) -> JobRecord {
        let mut r = self.record.clone();
        if r.status == JobStatus::Running {
            r.progress = f64::from_bits(self.progress.load(Ordering::Relaxed));
        }
        r
    }
}

/// Outcome of a submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Submitted {
    /// A new run was queued.
    Queued(String),
    /// An identical config is already queued, running or done.
    Existing(String, JobStatus),
}

pub struct JobStore {
    dir: PathBuf,
    jobs: Mutex<BTreeMap<String, Entry>>,
}

impl JobStore {
    /// Opens `dir`, creating it if needed, and loads the records in it. Jobs
    /// that were unfinished when the previous process stopped are marked
    /// failed; resubmitting the config runs them again.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut jobs = BTreeMap::new();
        for item in fs::read_dir(&dir)? {
            let path = item?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let mut record: JobRecord = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if matches!(record.status, JobStatus::Queued | JobStatus::Running) {
                record.status = JobStatus::Failed;
                record.error = Some("interrupted by a service restart".into());
                write_record(&dir, &record)?;
            }
            let progress = Arc::new(AtomicU64::new(record.progress.to_bits()));
            jobs.insert(record.job_id.clone(), Entry { record, progress });
        }
        log::info!("loaded {} jobs from {}", jobs.len(), dir.display());
        Ok(JobStore {
            dir,
            jobs: Mutex::new(jobs),
        })
    }

    fn lock(&self) -> MutexGuard<'_, BTreeMap<String, Entry>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers `config`. A failed job with the same id is queued again.
    pub fn submit(&self, config: RunConfig) -> Result<Submitted> {
        let id = job_id(&config);
        let mut jobs = self.lock();
        if let Some(e) = jobs.get(&id) {
            if e.record.status != JobStatus::Failed {
                return Ok(Submitted::Existing(id, e.record.status));
            }
        }
        let record = JobRecord {
            job_id: id.clone(),
            status: JobStatus::Queued,
            config,
            progress: 0.0,
            result: None,
            error: None,
        };
        write_record(&self.dir, &record)?;
        let progress = Arc::new(AtomicU64::new(0));
        jobs.insert(id.clone(), Entry { record, progress });
        Ok(Submitted::Queued(id))
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.lock().get(id).map(Entry::snapshot)
    }

    pub fn list(&self) -> Vec<JobRecord> {
        self.lock().values().map(Entry::snapshot).collect()
    }

    /// Moves a queued job to running and returns its config and progress
    /// counter.
    pub fn start(&self, id: &str) -> Result<(RunConfig, Arc<AtomicU64>)> {
        let mut jobs = self.lock();
        let e = jobs.get_mut(id).context("unknown job")?;
        anyhow::ensure!(
            e.record.status == JobStatus::Queued,
            "job {id} is not queued"
        );
        e.record.status = JobStatus::Running;
        write_record(&self.dir, &e.record)?;
        Ok((e.record.config.clone(), e.progress.clone()))
    }

    pub fn finish(&self, id: &str, outcome: std::result::Result<JobResult, String>) -> Result<()> {
        let mut jobs = self.lock();
        let e = jobs.get_mut(id).context("unknown job")?;
        match outcome {
            Ok(result) => {
                e.record.status = JobStatus::Done;
                e.record.progress = 1.0;
                e.record.result = Some(result);
            }
            Err(msg) => {
                e.record.status = JobStatus::Failed;
                e.record.progress = f64::from_bits(e.progress.load(Ordering::Relaxed));
                e.record.error = Some(msg);
            }
        }
        e.progress
            .store(e.record.progress.to_bits(), Ordering::Relaxed);
        write_record(&self.dir, &e.record)
    }
}

fn write_record(dir: &Path, record: &JobRecord) -> Result<()> {
    let path = dir.join(format!("{}.json", record.job_id));
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(record)?)
        .with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))
}
