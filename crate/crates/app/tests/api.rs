mod common;

use std::collections::BTreeSet;

use common::{get, pipeline, post, Server};
use datanav::{Config, Engine};
use datanav_core::linkhealth::mock::MockServer;
use datanav_core::search::{source_info, summarize, EntityCard};
use datanav_core::store::Store;
use datanav_core::{DatasetId, DatasetRecord};
use serde_json::Value;

const LEGACY_PREFIX: &str = "/legacy-archive.example.com/";

fn fixture_store(mock: &MockServer) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.jsonl");
    for (step, run) in pipeline(&store, &mock.base_url()) {
        assert_eq!(run.code, 0, "{step}: {}", run.stderr);
    }
    (dir, store)
}

fn ids(v: &Value, key: &str) -> Vec<String> {
    v[key].as_array().unwrap().iter().map(|h| h["id"].as_str().unwrap().to_string()).collect()
}

fn sources(v: &Value, key: &str) -> BTreeSet<String> {
    v[key].as_array().unwrap().iter().map(|h| h["source"].as_str().unwrap().to_string()).collect()
}

fn code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap_or("")
}

#[test]
fn read_endpoints_and_error_codes() {
    let mock = MockServer::start(200).unwrap();
    mock.set_status(LEGACY_PREFIX, 404);
    let (_dir, store_path) = fixture_store(&mock);
    let srv = Server::start(&store_path, &[]);
    let api = |p: &str| get(&format!("{}{p}", srv.base));

    let (st, all) = api("/api/search?q=pose%20estimation&k=10");
    assert_eq!(st, 200);
    let hits = all["hits"].as_array().unwrap();
    assert!(!hits.is_empty() && hits.len() <= 10);
    for h in hits {
        for key in ["id", "name", "desc", "url", "source", "tags", "score"] {
            assert!(h.get(key).is_some(), "hit lacks {key}: {h}");
        }
    }
    let scores: Vec<f64> = hits.iter().map(|h| h["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(!sources(&all, "hits").contains("legacy-archive"));
    assert_eq!(all["limit"], 20);

    let (_, page) = api("/api/search?q=pose%20estimation&k=10&offset=1&limit=2");
    assert_eq!(ids(&page, "hits"), ids(&all, "hits")[1..3].to_vec());
    assert_eq!(api("/api/search?q=pose%20estimation&k=10"), (st, all.clone()), "responses must be deterministic");

    let tag = hits[0]["tags"][0].as_str().unwrap().to_string();
    let (st, refined) = api(&format!("/api/search?q=pose%20estimation&k=10&tag={}", tag.replace(' ', "%20")));
    assert_eq!(st, 200);
    let all_ids: BTreeSet<String> = ids(&all, "hits").into_iter().collect();
    assert!(ids(&refined, "hits").iter().all(|i| all_ids.contains(i)));

    assert_eq!(code(&api("/api/search?q=pose&tag=no%20such%20tag").1), "unknown_tag");
    let (st, err) = api("/api/search");
    assert_eq!((st, code(&err)), (400, "missing_query"));
    assert_eq!(code(&api("/api/search?q=x&k=abc").1), "invalid_parameter");
    assert_eq!(code(&api("/api/search?q=x&limit=0").1), "invalid_parameter");

    let first = hits[0]["id"].as_str().unwrap();
    let (st, d) = api(&format!("/api/datasets/{first}"));
    assert_eq!(st, 200);
    assert_eq!(d["name"], hits[0]["name"]);
    let (st, err) = api("/api/datasets/unknown");
    assert_eq!((st, code(&err)), (404, "unknown_dataset"));

    let store = Store::load(&store_path).unwrap();
    let dead = store.records().find(|r| r.source_name == "legacy-archive").unwrap();
    let (st, err) = api(&format!("/api/datasets/{}", dead.id));
    assert_eq!((st, code(&err)), (410, "dataset_withheld"));
    let dup = store.records().find(|r| r.canonical_of.is_some()).unwrap();
    assert_eq!(api(&format!("/api/datasets/{}", dup.id)).0, 410);

    let (st, ent) = api("/api/entities/visionhub");
    assert_eq!(st, 200);
    assert_eq!(ent["entity"]["kind"], "institution");
    assert_eq!(sources(&ent, "datasets"), BTreeSet::from(["visionhub".to_string()]));
    assert_eq!(code(&api("/api/entities/legacy-archive").1), "unknown_entity");
    assert_eq!(code(&api("/api/entities/nobody").1), "unknown_entity");

    let (st, tagged) = api(&format!("/api/tags/{}/datasets", tag.replace(' ', "%20")));
    assert_eq!(st, 200);
    for d in tagged["datasets"].as_array().unwrap() {
        assert!(d["tags"].as_array().unwrap().iter().any(|t| t == tag.as_str()));
    }
    assert_eq!(code(&api("/api/tags/no%20such%20tag/datasets").1), "unknown_tag");

    let (st, s) = api("/api/summary?q=autonomous%20driving");
    assert_eq!(st, 200);
    assert!(s["summary"].as_str().unwrap().contains("autonomous driving"));
    assert_eq!(code(&api("/api/summary").1), "missing_query");

    let (st, err) = api("/api/nothing/here");
    assert_eq!((st, code(&err)), (404, "not_found"));
    let (st, err) = post(&format!("{}/api/search?q=x", srv.base), "");
    assert_eq!((st, code(&err)), (405, "method_not_allowed"));
}

#[test]
fn related_is_navigation_plus_entities_plus_summary() {
    let mock = MockServer::start(200).unwrap();
    mock.set_status(LEGACY_PREFIX, 404);
    let (_dir, store_path) = fixture_store(&mock);
    let srv = Server::start(&store_path, &[]);

    let config = Config::load(&common::e2e().join("config.toml")).unwrap();
    let engine = Engine::new(config).unwrap();
    let store = Store::load(&store_path).unwrap();
    let cat = engine.catalog(&store);
    let mut checked = 0;
    for r in store.records().filter(|r| r.is_visible()) {
        let related: Vec<&DatasetRecord> =
            cat.navigate(&r.id).unwrap().iter().filter_map(|n| cat.visible_record(n)).collect();
        let mut srcs: Vec<&str> = vec![&r.source_name];
        for n in &related {
            if !srcs.contains(&n.source_name.as_str()) {
                srcs.push(&n.source_name);
            }
        }
        let cards: Vec<&EntityCard> = srcs.iter().filter_map(|s| source_info(s, &cat.knowledge)).collect();
        let summary = summarize(&r.dataset_name, &[r], &related, &cards, engine.lm.as_ref()).unwrap();

        let (st, v) = get(&format!("{}/api/datasets/{}/related?limit=1000", srv.base, r.id));
        assert_eq!(st, 200);
        let want: Vec<String> = related.iter().map(|n| n.id.to_string()).collect();
        assert_eq!(ids(&v, "related"), want);
        let names: Vec<&str> = v["entities"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
        assert_eq!(names, cards.iter().map(|c| c.name.as_str()).collect::<Vec<_>>());
        assert_eq!(v["summary"], summary.as_str());
        checked += 1;
    }
    assert!(checked >= 10);
    let (st, v) = get(&format!("{}/api/datasets/{}/related", srv.base, DatasetId::new("missing")));
    assert_eq!((st, code(&v)), (404, "unknown_dataset"));
}

#[test]
fn admin_mutations_swap_the_snapshot() {
    let mock = MockServer::start(200).unwrap();
    mock.set_status(LEGACY_PREFIX, 404);
    let (_dir, store_path) = fixture_store(&mock);
    let srv = Server::start(&store_path, &["--probe-base-url", &mock.base_url()]);
    let search = || get(&format!("{}/api/search?q=sports%20pose&k=20", srv.base)).1;
    assert!(!sources(&search(), "hits").contains("legacy-archive"));

    mock.set_status(LEGACY_PREFIX, 200);
    let (st, report) = post(&format!("{}/api/admin/linkcheck", srv.base), "");
    assert_eq!(st, 200, "{report}");
    let legacy = report["report"]["sites"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["source_name"] == "legacy-archive")
        .unwrap()
        .clone();
    assert_eq!(legacy["forced_recheck"], true);
    assert_eq!(legacy["gate"], "ALIVE");
    assert!(sources(&search(), "hits").contains("legacy-archive"));
    let on_disk = Store::load(&store_path).unwrap();
    assert!(on_disk.records().filter(|r| r.source_name == "legacy-archive").all(|r| r.is_visible()));

    let (st, d) = post(&format!("{}/api/admin/dedup", srv.base), r#"{"theta": 0.85}"#);
    assert_eq!(st, 200, "{d}");
    let (st, err) = post(&format!("{}/api/admin/dedup", srv.base), r#"{"theta": 1.5}"#);
    assert_eq!((st, code(&err)), (400, "invalid_parameter"));
    let (st, err) = post(&format!("{}/api/admin/dedup", srv.base), r#"{"thet": 1}"#);
    assert_eq!((st, code(&err)), (400, "invalid_body"));
    let (st, t) = post(&format!("{}/api/admin/tag", srv.base), "{}");
    assert_eq!(st, 200, "{t}");
    assert_eq!(t["annotated"], 0, "everything was tagged by the pipeline");
}
