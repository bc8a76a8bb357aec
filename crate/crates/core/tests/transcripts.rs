//! The shipped transcripts must match the prompts the pipeline sends
//! today. Set `QUERYFORGE_BLESS=1` to rewrite their request digests.

mod common;

use common::*;
use queryforge::provider::Provider;

#[test]
fn shipped_transcripts_are_current_and_fully_used() {
    let bless = std::env::var_os("QUERYFORGE_BLESS").is_some();
    for name in SCENARIOS {
        let p = scripted(name);
        run_scenario(name, &p);
        let recorded = sorted(p.records());
        let shipped = shipped_records(name);
        if bless {
            let text: String = recorded
                .iter()
                .map(|r| serde_json::to_string(r).unwrap() + "\n")
                .collect();
            std::fs::write(transcript_path(name), text).unwrap();
            continue;
        }
        assert_eq!(recorded, shipped, "transcript {name} is stale; rerun with QUERYFORGE_BLESS=1");
    }
}
