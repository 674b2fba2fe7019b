//! Pulling reports from a Bugzilla-style REST endpoint, or mapping a sample
//! record when no endpoint is given.
//!
//! `cargo run --example ingest_reports -- https://bugzilla.mozilla.org/rest/bug product=Firefox`

use bugdedup::corpus::{filter_invalid_with_report, ingest_rest, map_remote_record, RestIngest};
use serde_json::json;

#[tokio::main]
async fn main() -> bugdedup::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(endpoint) = args.next() else {
        let record = json!({
            "id": 1234567,
            "summary": "Tabs crash when opening /home/user/report.pdf",
            "description": "Steps: open the file from 192.168.0.10 share",
            "product": "Firefox",
            "component": "Tabbed Browser",
            "severity": "critical",
            "status": "RESOLVED",
            "resolution": "DUPLICATE",
            "dupe_of": 1234000,
            "creation_time": "2024-05-01T10:20:30Z"
        });
        match map_remote_record(&record) {
            Ok(bug) => println!("{}", serde_json::to_string_pretty(&bug).unwrap()),
            Err(e) => println!("rejected: {e}"),
        }
        return Ok(());
    };

    let mut req = RestIngest::new(endpoint, 100, 300);
    for kv in args {
        if let Some((k, v)) = kv.split_once('=') {
            req = req.query(k, v);
        }
    }
    let client = reqwest::Client::new();
    let (corpus, skipped) = ingest_rest(&client, &req).await?;
    let (clean, report) = filter_invalid_with_report(&corpus);
    println!("fetched {}, skipped {}, kept {} after filtering", corpus.len(), skipped.skipped, clean.len());
    println!("{report:?}");
    for bug in clean.iter().take(5) {
        println!("  {} [{}] {}", bug.id, bug.status, bug.headline);
    }
    Ok(())
}
