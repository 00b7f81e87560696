mod common;

use bimanual_harness::episode::ActionStatus;
use bimanual_harness::protocol::{parse_plan, ExecutablePlan};
use bimanual_harness::tasks::Tier;
use common::*;

#[test]
fn handover_transcript_parses_to_eight_calls() {
    let p = parse_plan(HANDOVER_PLAN, Tier::HighLevel).unwrap();
    assert!(matches!(p.record.executable_plan, ExecutablePlan::Skills(_)));
    assert_eq!(p.record.executable_plan.len(), 8);
}

#[test]
fn stack_transcript_parses_to_fourteen_vectors() {
    let p = parse_plan(STACK_PLAN, Tier::LowLevel).unwrap();
    assert!(matches!(p.record.executable_plan, ExecutablePlan::Actions(_)));
    assert_eq!(p.record.executable_plan.len(), 14);
}

#[test]
fn handover_transcript_succeeds() {
    let log = replay_single("handover_block", handover_scene(), HANDOVER_PLAN);
    for a in &log.rounds[0].actions {
        eprintln!("{:?} {:?} {}", a.skill, a.status, a.feedback);
    }
    assert!(log.result.success, "{:?}", log.result);
    assert_eq!(log.result.rounds_used, 1);
}

#[test]
fn stack_transcript_succeeds() {
    let log = replay_single("stack_blocks_two", stack_scene(), STACK_PLAN);
    for a in &log.rounds[0].actions {
        eprintln!("{:?} {}", a.status, a.feedback);
    }
    assert!(log.result.success, "{:?}", log.result.termination);
    assert!(log.rounds[0].actions.iter().all(|a| a.status != ActionStatus::Skipped));
}
