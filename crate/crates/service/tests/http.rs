use std::sync::Arc;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

use twouta_core::elicitation::{run, ElicitationConfig};
use twouta_core::report::RunReport;
use twouta_core::scenario::{generate, GeneratorParams, Scenario};
use twouta_core::{Error, Query, Rational, SimulatedPair};
use twouta_service::{router, PendingQuery, SessionResult, Sessions, Status, SubmitResponse};

async fn start() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(Sessions::default()))).await.unwrap() });
    format!("http://{addr}")
}

fn f1() -> Scenario {
    Scenario::from_json(
        r#"{"grid":{"criteria":[{"name":"price","breakpoints":["0","2","4"]},{"name":"autonomy","breakpoints":["0","2","4"]}]},
            "models":[{"slopes":[["1","2"],["1","3"]]},{"slopes":[["1","1"],["2","1"]]}]}"#,
    )
    .unwrap()
}

fn value(v: &Option<Rational>) -> Value {
    v.as_ref().map_or(Value::Null, |r| Value::String(r.to_string()))
}

async fn create(c: &Client, base: &str, grid: &Value, epsilon: Value) -> reqwest::Response {
    c.post(format!("{base}/sessions")).json(&json!({ "grid": grid, "epsilon": epsilon })).send().await.unwrap()
}

/// Answers every pending query from `sim`, high answer first.
async fn drive(c: &Client, base: &str, id: u64, sim: &SimulatedPair) -> usize {
    let mut asked = 0;
    loop {
        let resp = c.get(format!("{base}/sessions/{id}/query")).send().await.unwrap();
        if resp.status() == StatusCode::CONFLICT {
            return asked;
        }
        let pending: PendingQuery = resp.json().await.unwrap();
        let answers = sim.simulated_answer(&pending.query).unwrap();
        for v in [&answers.high, &answers.low] {
            let r = c.post(format!("{base}/sessions/{id}/answers")).json(&json!({ "value": value(v) })).send().await.unwrap();
            assert_eq!(r.status(), StatusCode::OK);
        }
        asked += 1;
    }
}

async fn session_result(c: &Client, base: &str, id: u64) -> SessionResult {
    c.get(format!("{base}/sessions/{id}/result")).send().await.unwrap().json().await.unwrap()
}

fn library_report(s: &Scenario) -> RunReport {
    let result = run(&mut s.simulated_pair(), s.grid.clone(), ElicitationConfig::default());
    RunReport::new(&s.grid, &result, None)
}

#[tokio::test]
async fn f1_session_matches_library() {
    let base = start().await;
    let c = Client::new();
    let s = f1();
    let grid = serde_json::to_value(&*s.grid).unwrap();
    let resp = create(&c, &base, &grid, json!("0")).await;
    assert_eq!(resp.status(), StatusCode::CREATED);
    let id = resp.json::<Value>().await.unwrap()["id"].as_u64().unwrap();

    let first: PendingQuery = c.get(format!("{base}/sessions/{id}/query")).send().await.unwrap().json().await.unwrap();
    assert_eq!(first.query, Query::new(0, 1, Rational::from_integer(2), Rational::zero(), Rational::zero()));
    assert!(first.phrasing.contains("price") && first.phrasing.contains("autonomy"));

    let r = c.get(format!("{base}/sessions/{id}/result")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "not_done");

    let asked = drive(&c, &base, id, &s.simulated_pair()).await;
    let res = session_result(&c, &base, id).await;
    assert_eq!(res.status, Status::Done);
    assert_eq!(res.outcome, library_report(&s));
    assert_eq!(asked, res.outcome.query_count);
    let tables = res.tables.unwrap();
    assert_eq!(tables.anchored.len(), 2);
    let sum: Rational = tables.normalized[0].iter().flatten().map(|g| g * Rational::from_integer(2)).sum();
    assert_eq!(sum, Rational::one());
    assert_eq!(res.curves.len(), 1);

    let library = run(&mut s.simulated_pair(), s.grid.clone(), ElicitationConfig::default()).unwrap();
    let text = c.get(format!("{base}/sessions/{id}/transcript")).send().await.unwrap().text().await.unwrap();
    assert_eq!(text, library.transcript.to_jsonl());

    let r = c.get(format!("{base}/sessions/{id}/query")).send().await.unwrap();
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "no_pending");
    let r = c.post(format!("{base}/sessions/{id}/answers")).json(&json!({ "value": "1" })).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "session_closed");
}

#[tokio::test]
async fn random_sessions_match_library() {
    let base = start().await;
    let c = Client::new();
    for seed in 0..5 {
        let s = generate(&GeneratorParams::new(vec![2, 3, 1]), seed).unwrap();
        let grid = serde_json::to_value(&*s.grid).unwrap();
        let id = create(&c, &base, &grid, Value::Null).await.json::<Value>().await.unwrap()["id"].as_u64().unwrap();
        drive(&c, &base, id, &s.simulated_pair()).await;
        assert_eq!(session_result(&c, &base, id).await.outcome, library_report(&s), "seed {seed}");
    }
}

#[tokio::test]
async fn rejects_bad_requests() {
    let base = start().await;
    let c = Client::new();
    let one = json!({"criteria": [{"name": "a", "breakpoints": ["0", "1"]}]});
    let r = create(&c, &base, &one, Value::Null).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "invalid_grid");

    let grid = serde_json::to_value(&*f1().grid).unwrap();
    let r = create(&c, &base, &grid, json!("-1/2")).await;
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "invalid_epsilon");

    let r = c.get(format!("{base}/sessions/999/query")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    let body: Value = r.json().await.unwrap();
    assert_eq!((body["code"].clone(), body["context"]["id"].clone()), (json!("not_found"), json!(999)));

    let id = create(&c, &base, &grid, Value::Null).await.json::<Value>().await.unwrap()["id"].as_u64().unwrap();
    for bad in [json!({ "value": "abc" }), json!({ "value": [1] }), json!({})] {
        let r = c.post(format!("{base}/sessions/{id}/answers")).json(&bad).send().await.unwrap();
        assert_eq!(r.json::<Value>().await.unwrap()["code"], "malformed_value");
    }
    let r = c.post(format!("{base}/sessions/{id}/answers")).json(&json!({ "value": null })).send().await.unwrap();
    let sub: SubmitResponse = r.json().await.unwrap();
    assert_eq!((sub.status, sub.answers_received), (Status::AwaitingAnswers, 1));
}

#[tokio::test]
async fn concurrent_submissions_keep_both_answers() {
    let base = start().await;
    let c = Client::new();
    let s = f1();
    let grid = serde_json::to_value(&*s.grid).unwrap();
    let id = create(&c, &base, &grid, Value::Null).await.json::<Value>().await.unwrap()["id"].as_u64().unwrap();
    let url = format!("{base}/sessions/{id}/answers");
    let (a, b) = tokio::join!(
        c.post(&url).json(&json!({ "value": "1" })).send(),
        c.post(&url).json(&json!({ "value": "2" })).send()
    );
    let counts: Vec<usize> = vec![
        a.unwrap().json::<SubmitResponse>().await.unwrap().answers_received,
        b.unwrap().json::<SubmitResponse>().await.unwrap().answers_received,
    ];
    assert!(counts.contains(&0) && counts.contains(&1));
    let text = c.get(format!("{base}/sessions/{id}/transcript")).send().await.unwrap().text().await.unwrap();
    assert!(text.contains(r#""answers":["1","2"]"#), "{text}");
}

/// Both DMs agree everywhere except on intervals 1 and 3 of the second
/// criterion; no pattern links those two intervals, so the pairing of the
/// interval-3 answers stays ambiguous.
fn degenerate_scenario() -> Scenario {
    Scenario::from_json(
        r#"{"grid":{"criteria":[{"name":"a","breakpoints":["0","1","2"]},{"name":"b","breakpoints":["0","1","2","3"]}]},
            "models":[{"slopes":[["1","3"],["2","3","2"]]},{"slopes":[["1","3"],["1","3","3"]]}]}"#,
    )
    .unwrap()
}

#[tokio::test]
async fn degenerate_session_reports_offending_rectangles() {
    let s = degenerate_scenario();
    let lib = run(&mut s.simulated_pair(), s.grid.clone(), ElicitationConfig::default()).unwrap_err();
    assert!(matches!(lib.error.root(), Error::Degenerate { .. }), "{}", lib.error);

    let base = start().await;
    let c = Client::new();
    let grid = serde_json::to_value(&*s.grid).unwrap();
    let id = create(&c, &base, &grid, Value::Null).await.json::<Value>().await.unwrap()["id"].as_u64().unwrap();
    drive(&c, &base, id, &s.simulated_pair()).await;
    let res = session_result(&c, &base, id).await;
    assert_eq!(res.status, Status::Failed);
    let err = res.error.unwrap();
    assert_eq!(err.code, "degenerate");
    assert!(err.context["rectangles"].as_array().is_some_and(|r| !r.is_empty()));
    assert!(res.tables.is_none());
}
