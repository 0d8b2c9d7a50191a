use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use trifield_core::fit::fit_field_with;
use trifield_core::geometry::sample_surface;
use trifield_core::proposals::ingest_labels;
use trifield_core::{FitConfig, LabelSet};

use super::session::{Derived, Session, Store};
use crate::inputs::FeatureSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobInfo {
    pub job_id: String,
    pub shape_id: String,
    pub status: JobStatus,
    pub iteration: usize,
    /// Mean batch loss at the latest snapshot.
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Body of `POST /shapes/{id}/fit`: a fit configuration plus the labels
/// that supervise it.
#[derive(Clone, Debug, Deserialize)]
pub struct FitRequest {
    /// Face or element labels.
    pub labels: LabelSet,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub points_seed: u64,
    #[serde(flatten)]
    pub config: FitConfig,
}

fn default_points() -> usize {
    crate::inputs::DEFAULT_POINTS
}

struct Job {
    id: String,
    session: Arc<Session>,
    request: FitRequest,
}

/// Runs fit jobs one at a time in submission order on a worker thread.
#[derive(Clone)]
pub struct JobQueue {
    tx: Sender<Job>,
    jobs: Arc<Mutex<HashMap<String, JobInfo>>>,
    next: Arc<Mutex<u64>>,
}

impl JobQueue {
    pub fn start(store: Store) -> JobQueue {
        let (tx, rx) = channel::<Job>();
        let jobs: Arc<Mutex<HashMap<String, JobInfo>>> = Arc::default();
        let table = jobs.clone();
        std::thread::Builder::new()
            .name("fit-worker".into())
            .spawn(move || {
                for job in rx {
                    update(&table, &job.id, |j| j.status = JobStatus::Running);
                    let result = run(&job, &table, &store);
                    update(&table, &job.id, |j| match result {
                        Ok(()) => j.status = JobStatus::Done,
                        Err(e) => {
                            log::error!("job {} failed: {e:#}", j.job_id);
                            j.status = JobStatus::Failed;
                            j.error = Some(format!("{e:#}"));
                        }
                    });
                }
            })
            .expect("spawning the fit worker");
        JobQueue {
            tx,
            jobs,
            next: Arc::default(),
        }
    }

    pub fn submit(&self, session: Arc<Session>, request: FitRequest) -> String {
        let id = {
            let mut n = self.next.lock().unwrap();
            *n += 1;
            format!("job-{:04}", *n)
        };
        let info = JobInfo {
            job_id: id.clone(),
            shape_id: session.id.clone(),
            status: JobStatus::Queued,
            iteration: 0,
            loss: None,
            error: None,
        };
        self.jobs.lock().unwrap().insert(id.clone(), info);
        self.tx
            .send(Job {
                id: id.clone(),
                session,
                request,
            })
            .expect("fit worker is alive");
        id
    }

    pub fn get(&self, id: &str) -> Option<JobInfo> {
        self.jobs.lock().unwrap().get(id).cloned()
    }
}

fn update(table: &Mutex<HashMap<String, JobInfo>>, id: &str, f: impl FnOnce(&mut JobInfo)) {
    if let Some(j) = table.lock().unwrap().get_mut(id) {
        f(j);
    }
}

fn run(job: &Job, table: &Mutex<HashMap<String, JobInfo>>, store: &Store) -> Result<()> {
    let mesh = &job.session.mesh;
    let req = &job.request;
    let elements = sample_surface(mesh, req.points, req.points_seed)?;
    let labels = req.labels.to_elements(&elements, mesh.face_count())?;
    let proposals = ingest_labels(&labels, elements.len())?;
    let (field, report) = fit_field_with(&elements.points, &proposals, &req.config, |p| {
        update(table, &job.id, |j| {
            j.iteration = p.iteration;
            j.loss = Some(p.snapshot.loss);
        });
        ControlFlow::Continue(())
    })?;
    update(table, &job.id, |j| {
        j.iteration = report.iterations;
        j.loss = report.snapshots.last().map(|s| s.loss).or(j.loss);
    });
    let bytes = field.to_bytes();
    let derived = Derived::build(mesh, &FeatureSource::Field(field))?;
    store.save_field(&job.session.id, &bytes)?;
    job.session.swap_field(bytes, derived);
    Ok(())
}
