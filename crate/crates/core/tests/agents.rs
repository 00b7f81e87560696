use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use bimanual_harness::agents::remote::extract_content;
use bimanual_harness::agents::{
    BackendChoice, BackendError, OraclePolicy, Policy, RandomPolicy, RecordEntry, RemoteModelConfig, RemotePolicy,
    ReplayPolicy, Semaphore,
};
use bimanual_harness::episode::{ParseOutcome, Termination};
use bimanual_harness::runner::{run_episode, EpisodeContext};
use bimanual_harness::simulator::SimConfig;
use bimanual_harness::tasks::TaskRegistry;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    auth: Option<String>,
    body: Value,
}

/// Serves the scripted responses in order, repeating the last one.
struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn stub(script: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            log.lock().unwrap().push(Seen { auth, body: serde_json::from_slice(&body).unwrap_or(Value::Null) });
            let (status, text) = &script[i.min(script.len() - 1)];
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    Stub { url, seen }
}

fn config(url: &str) -> RemoteModelConfig {
    RemoteModelConfig {
        endpoint: url.to_string(),
        model: "stub-model".into(),
        timeout_secs: 5.0,
        max_retries: 2,
        backoff_base_ms: 1,
        ..RemoteModelConfig::default()
    }
}

fn client(url: &str) -> RemotePolicy {
    RemotePolicy::with_key(config(url), "sk-test-secret".into(), Arc::new(Semaphore::new(2)))
}

#[test]
fn sends_prompt_images_and_bearer_key() {
    let s = stub(vec![(200, chat("hello"))]);
    let out = client(&s.url).complete("plan please", &[("ego.png".into(), vec![1, 2, 3])]).unwrap();
    assert_eq!(out, "hello");
    let seen = s.seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test-secret"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "stub-model");
    let content = body["messages"][0]["content"].as_array().unwrap();
    assert_eq!(content[0]["text"], "plan please");
    assert_eq!(content[1]["image_url"]["url"], "data:image/png;base64,AQID");
}

#[test]
fn auth_failure_is_not_retried() {
    let s = stub(vec![(401, "{}".into())]);
    assert_eq!(client(&s.url).complete("x", &[]), Err(BackendError::AuthFailure(401)));
    assert_eq!(s.seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried() {
    let s = stub(vec![(500, "{}".into()), (503, "{}".into()), (200, chat("third time"))]);
    assert_eq!(client(&s.url).complete("x", &[]).unwrap(), "third time");
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn rate_limit_gives_up_after_retries() {
    let s = stub(vec![(429, "{}".into())]);
    assert_eq!(client(&s.url).complete("x", &[]), Err(BackendError::RateLimited));
    assert_eq!(s.seen.lock().unwrap().len(), 3);
}

#[test]
fn unexpected_body_is_a_bad_response() {
    let s = stub(vec![(200, "{\"nothing\": true}".into())]);
    assert!(matches!(client(&s.url).complete("x", &[]), Err(BackendError::BadResponse(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let err = client(&url).complete("x", &[]).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_) | BackendError::Timeout), "{err:?}");
}

#[test]
fn key_stays_out_of_debug_output() {
    let p = client("http://127.0.0.1:1/");
    let dbg = format!("{p:?}");
    assert!(!dbg.contains("sk-test-secret"));
    assert!(dbg.contains("redacted"));
}

#[test]
fn missing_environment_variable() {
    let cfg = RemoteModelConfig { api_key_env: "BIMANUAL_TEST_NEVER_SET".into(), ..RemoteModelConfig::default() };
    let err = RemotePolicy::new(cfg.clone(), Arc::new(Semaphore::new(1))).unwrap_err();
    assert_eq!(err, BackendError::MissingCredential("BIMANUAL_TEST_NEVER_SET".into()));
    assert!(BackendChoice::remote(cfg).build(&SimConfig::default()).is_err());
}

#[test]
fn content_extraction() {
    assert_eq!(extract_content(&chat("a")).as_deref(), Some("a"));
    let parts = json!({"choices": [{"message": {"content": [{"type": "text", "text": "x"}, {"type": "text", "text": "y"}]}}]});
    assert_eq!(extract_content(&parts.to_string()).as_deref(), Some("xy"));
    assert_eq!(extract_content("not json"), None);
    assert_eq!(extract_content("{\"choices\": []}"), None);
}

#[test]
fn semaphore_caps_concurrency() {
    let sem = Arc::new(Semaphore::new(2));
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (sem, live, peak) = (sem.clone(), live.clone(), peak.clone());
            thread::spawn(move || {
                let _p = sem.acquire();
                let n = live.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(n, Ordering::SeqCst);
                thread::sleep(Duration::from_millis(10));
                live.fetch_sub(1, Ordering::SeqCst);
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(peak.load(Ordering::SeqCst) <= 2);
    assert_eq!(sem.available(), 2);
}

fn oracle_recording(task_id: &str, seed: u64) -> Vec<RecordEntry> {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    run_episode(reg.get(task_id).unwrap(), seed, &mut OraclePolicy::default(), &ctx).1
}

#[test]
fn stub_model_matches_replay_and_its_own_recording() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("stack_blocks_three").unwrap();
    let rec = oracle_recording("stack_blocks_three", 4);
    let script = rec.iter().map(|e| (200, chat(e.output.as_ref().unwrap()))).collect();
    let s = stub(script);

    let (live, live_rec) = run_episode(task, 4, &mut client(&s.url), &ctx);
    let (replayed, _) = run_episode(task, 4, &mut ReplayPolicy::from_entries(rec), &ctx);
    let (again, _) = run_episode(task, 4, &mut ReplayPolicy::from_entries(live_rec), &ctx);
    assert!(live.result.success);
    for other in [&replayed, &again] {
        assert_eq!(live.result.score, other.result.score);
        assert_eq!(live.result.rounds_used, other.result.rounds_used);
        assert_eq!(live.result.final_state, other.result.final_state);
        let hashes = |l: &bimanual_harness::episode::EpisodeLog| l.rounds.iter().map(|r| r.state_hash_after.clone()).collect::<Vec<_>>();
        assert_eq!(hashes(&live), hashes(other));
    }
    assert!(live.rounds.iter().all(|r| !r.observations.is_empty()));
    assert!(!live.to_jsonl().contains("sk-test-secret"));
}

#[test]
fn malformed_reply_uses_a_round_and_continues() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("stack_blocks_two").unwrap();
    let rec = oracle_recording("stack_blocks_two", 1);
    let mut script = vec![(200, chat("I think the robot should stack them."))];
    script.extend(rec.iter().map(|e| (200, chat(e.output.as_ref().unwrap()))));
    let s = stub(script);
    let (log, _) = run_episode(task, 1, &mut client(&s.url), &ctx);
    assert!(matches!(log.rounds[0].parse, ParseOutcome::Failed { .. }));
    assert!(log.rounds.len() > 1);
}

#[test]
fn replay_runs_out() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("stack_blocks_two").unwrap();
    let mut rec = oracle_recording("stack_blocks_two", 2);
    rec.truncate(1);
    rec[0].output = Ok("[]".into());
    let (log, _) = run_episode(task, 2, &mut ReplayPolicy::from_entries(rec), &ctx);
    assert_eq!(log.result.termination, Termination::BackendError);
    assert!(log.rounds.last().unwrap().backend_error.as_deref().unwrap().contains("round 1"));
}

#[test]
fn random_policy_is_deterministic_per_seed() {
    let reg = TaskRegistry::builtin();
    let ctx = EpisodeContext::new(reg);
    let task = reg.get("spatial_dense").unwrap();
    let a = run_episode(task, 9, &mut RandomPolicy::new(3), &ctx).0;
    let b = run_episode(task, 9, &mut RandomPolicy::new(3), &ctx).0;
    assert_eq!(a.content_hash(), b.content_hash());
    let mut p = RandomPolicy::new(3);
    run_episode(task, 1, &mut p, &ctx);
    let c = run_episode(task, 9, &mut p, &ctx).0;
    assert_eq!(a.content_hash(), c.content_hash());

    let hl = reg.get("blocks_ranking_rgb").unwrap();
    let (log, _) = run_episode(hl, 0, &mut RandomPolicy::new(0), &ctx);
    assert_eq!(log.result.termination, Termination::BackendError);
}

#[test]
fn policy_names() {
    assert_eq!(OraclePolicy::default().name(), "oracle");
    assert_eq!(RandomPolicy::new(0).name(), "random");
    assert_eq!(client("http://127.0.0.1:1/").name(), "remote:stub-model");
}
