//! Wall-clock mode: grabber, detection worker and recognition worker each run
//! on their own thread and talk to the controller only through channels.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{ms_to_us, Frame, Timestamp};
use crate::runtime::controller::{
    run_detection, run_face, Controller, DetectJob, FaceJob, FaceResult, RecognizeJob,
};
use crate::runtime::{PipelineConfig, RunOutput};
use crate::scenario::Scenario;
use crate::synthetic::DetectorOutput;

enum ToController {
    Grabbed(Frame),
    Detected(DetectJob, DetectorOutput),
    FaceDone(FaceJob, FaceResult),
    Recognized,
}

fn elapsed(start: Instant) -> Timestamp {
    Timestamp(start.elapsed().as_micros() as u64)
}

pub(crate) fn run_realtime(scenario: &Scenario, config: &PipelineConfig) -> Result<RunOutput> {
    let scenario = Arc::new(scenario.clone());
    let config_arc = Arc::new(config.clone());
    let end = scenario.duration();
    let frame_us = config.frame_interval_us();
    let tick_us = config.tick_interval_us();
    let stop = Arc::new(AtomicBool::new(false));

    let (to_ctl, inbox) = mpsc::channel::<ToController>();
    let (detect_tx, detect_rx) = mpsc::channel::<DetectJob>();
    let (recog_tx, recog_rx) = mpsc::channel::<RecognizeJob>();
    let start = Instant::now();

    let grabber = {
        let tx = to_ctl.clone();
        let stop = Arc::clone(&stop);
        let [w, h] = scenario.frame_size;
        thread::Builder::new()
            .name("grabber".into())
            .spawn(move || {
                for k in 0u64.. {
                    let due = Duration::from_micros(k * frame_us);
                    if due >= Duration::from_micros(end.as_micros()) || stop.load(Ordering::Relaxed)
                    {
                        break;
                    }
                    if let Some(wait) = due.checked_sub(start.elapsed()) {
                        thread::sleep(wait);
                    }
                    let ts = elapsed(start).min(end);
                    if tx
                        .send(ToController::Grabbed(Frame::with_size(k, ts, w, h)))
                        .is_err()
                    {
                        break;
                    }
                }
            })?
    };

    let detector = {
        let tx = to_ctl.clone();
        let scenario = Arc::clone(&scenario);
        thread::Builder::new()
            .name("detection".into())
            .spawn(move || {
                for job in detect_rx {
                    let output = run_detection(&scenario, &job);
                    thread::sleep(Duration::from_micros(ms_to_us(output.latency_ms)));
                    if tx.send(ToController::Detected(job, output)).is_err() {
                        break;
                    }
                }
            })?
    };

    let recognizer = {
        let tx = to_ctl;
        let scenario = Arc::clone(&scenario);
        let config = Arc::clone(&config_arc);
        thread::Builder::new()
            .name("recognition".into())
            .spawn(move || {
                'jobs: for job in recog_rx {
                    for face in &job.faces {
                        let result = run_face(&scenario, &config, job.frame_id, job.frame_ts, face);
                        thread::sleep(Duration::from_micros(ms_to_us(
                            result.recognition.latency_ms,
                        )));
                        if tx
                            .send(ToController::FaceDone(face.clone(), result))
                            .is_err()
                        {
                            break 'jobs;
                        }
                    }
                    if tx.send(ToController::Recognized).is_err() {
                        break;
                    }
                }
            })?
    };

    let outcome = (|| -> Result<_> {
        let mut ctl = Controller::new(&scenario, config)?;
        let mut pending: Option<RecognizeJob> = None;
        let mut next_tick = 0u64;
        loop {
            let now = elapsed(start);
            if now >= end {
                break;
            }
            let tick_at = Timestamp(next_tick * tick_us);
            if now >= tick_at {
                ctl.tick(now);
                next_tick += 1;
                continue;
            }
            let wait = Duration::from_micros(tick_at.min(end) - now);
            let msg = match inbox.recv_timeout(wait) {
                Ok(msg) => msg,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => break,
            };
            let now = elapsed(start);
            match msg {
                ToController::Grabbed(frame) => ctl.grab(now, frame)?,
                ToController::Detected(job, output) => ctl.detection_done(now, &job, output)?,
                ToController::FaceDone(face, result) => {
                    let job = pending
                        .as_ref()
                        .ok_or_else(|| Error::Contract("face result without a job".into()))?;
                    ctl.face_done(now, job, &face, result)?;
                }
                ToController::Recognized => {
                    let job = pending.take().ok_or_else(|| {
                        Error::Contract("recognition result without a job".into())
                    })?;
                    ctl.recognition_done(now, &job)?;
                }
            }
            if let Some(job) = ctl.next_detection_job(now)? {
                // a closed channel only happens during shutdown
                let _ = detect_tx.send(job);
            }
            if let Some(job) = ctl.next_recognition_job(now)? {
                pending = Some(job.clone());
                let _ = recog_tx.send(job);
            }
        }
        Ok(ctl.finish())
    })();

    stop.store(true, Ordering::Relaxed);
    drop(detect_tx);
    drop(recog_tx);
    drop(inbox);
    for handle in [grabber, detector, recognizer] {
        handle
            .join()
            .map_err(|_| Error::Contract("pipeline worker panicked".into()))?;
    }
    let (trace, annotated, metrics) = outcome?;
    Ok(RunOutput {
        trace,
        annotated,
        metrics,
    })
}
