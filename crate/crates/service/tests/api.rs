use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use framecast::geometry::{BuildingLayout, Point};
use framecast::infer::{predict_all, ReplayPredictor, DEFAULT_CAP};
use framecast::model::{ModelConfig, QuadNet};
use framecast::oracle::{solve_structure, OracleConfig};
use framecast::synth::{DatasetRecord, Provenance};
use framecast_service::api::{handle_predict, PredictRequest, PredictResponse};
use framecast_service::server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

fn rect_walls(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 4]> {
    vec![
        [x0, y0, x1, y0],
        [x1, y0, x1, y1],
        [x1, y1, x0, y1],
        [x0, y1, x0, y0],
    ]
}

fn record(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> DatasetRecord {
    let pts = [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
    let building = BuildingLayout::from_polygon(id, &pts, Vec::new()).unwrap();
    let layout = solve_structure(&building, &OracleConfig::default()).unwrap();
    DatasetRecord {
        building,
        layout,
        provenance: Provenance {
            base_id: "b0".into(),
            rotation: 0,
            scale: 1.0,
            translation: [0.0, 0.0],
        },
    }
}

fn replay_state() -> AppState {
    let recs = [record("a", 10.0, 10.0, 110.0, 90.0), record("b", 20.0, 30.0, 60.0, 100.0)];
    AppState::new(Some(Arc::new(ReplayPredictor::new(&recs, 4))), "replay", 2)
}

async fn post(state: AppState, body: String) -> (StatusCode, Value) {
    let app = router(state, None).unwrap();
    let req = Request::post("/api/predict")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn walls_body(walls: &[[f64; 4]]) -> String {
    json!({ "walls": walls, "canvas": { "w": 128, "h": 128 } }).to_string()
}

#[tokio::test]
async fn rectangle_returns_oracle_columns() {
    let (status, body) = post(replay_state(), walls_body(&rect_walls(10.0, 10.0, 110.0, 90.0))).await;
    assert_eq!(status, StatusCode::OK);
    let resp: PredictResponse = serde_json::from_value(body).unwrap();
    let expected = record("a", 10.0, 10.0, 110.0, 90.0).layout;
    assert_eq!(resp.columns.len(), expected.len());
    assert!(resp.columns.len() >= 4);
    assert!(resp.iterations >= 1);
    assert_eq!(resp.model_version, "replay");
    for (got, want) in resp.columns.iter().zip(expected.columns()) {
        assert!((got.x - want.x).abs() < 1e-9 && (got.y - want.y).abs() < 1e-9);
        assert_eq!(got.ctype, want.ctype);
    }
}

#[tokio::test]
async fn diagonal_wall_is_rejected() {
    let (status, body) = post(replay_state(), walls_body(&[[0.0, 0.0, 10.0, 10.0]])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "walls[0]");
    assert!(body["error"]["message"].as_str().unwrap().starts_with("segment not axis-aligned"));
}

#[tokio::test]
async fn empty_walls_have_no_exterior_loop() {
    let (status, body) = post(replay_state(), walls_body(&[])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "walls");
    assert_eq!(body["error"]["message"], "no exterior loop");
}

#[tokio::test]
async fn open_loop_and_out_of_canvas_are_rejected() {
    let mut open = rect_walls(10.0, 10.0, 110.0, 90.0);
    open.pop();
    let (status, body) = post(replay_state(), walls_body(&open)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "walls");

    let (status, body) = post(replay_state(), walls_body(&rect_walls(10.0, 10.0, 140.0, 90.0))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"]["field"].as_str().unwrap().starts_with("walls"));
}

#[tokio::test]
async fn malformed_body_and_wrong_canvas() {
    let (status, body) = post(replay_state(), "{\"walls\": 3}".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "body");

    let req = json!({ "walls": rect_walls(10.0, 10.0, 110.0, 90.0), "canvas": { "w": 256, "h": 128 } });
    let (status, body) = post(replay_state(), req.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["field"], "canvas");
}

#[tokio::test]
async fn no_model_is_unavailable() {
    let state = AppState::new(None, "none", 1);
    let (status, _) = post(state.clone(), walls_body(&rect_walls(10.0, 10.0, 110.0, 90.0))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let app = router(state, None).unwrap();
    let resp = app.oneshot(Request::get("/healthz").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn healthz_reports_version() {
    let app = router(replay_state(), None).unwrap();
    let resp = app.oneshot(Request::get("/healthz").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v, json!({ "status": "ok", "model_version": "replay" }));
}

#[tokio::test]
async fn cors_headers() {
    let app = router(replay_state(), Some("http://localhost:5173")).unwrap();
    let req = Request::get("/healthz")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}

#[tokio::test]
async fn network_parity_and_statelessness() {
    let net = QuadNet::<f32>::new(&ModelConfig::tiny()).unwrap();
    let state = AppState::new(Some(Arc::new(net.clone())), "tiny", 2);
    let a = walls_body(&rect_walls(10.0, 10.0, 110.0, 90.0));
    let b = walls_body(&rect_walls(20.0, 30.0, 60.0, 100.0));

    let (s1, first) = post(state.clone(), a.clone()).await;
    let (s2, _) = post(state.clone(), b).await;
    let (s3, again) = post(state.clone(), a.clone()).await;
    assert_eq!((s1, s2, s3), (StatusCode::OK, StatusCode::OK, StatusCode::OK));
    assert_eq!(first["columns"], again["columns"]);
    assert_eq!(first["iterations"], again["iterations"]);

    let req: PredictRequest = serde_json::from_str(&a).unwrap();
    let building = framecast_service::api::parse_building(&req).unwrap();
    let direct = predict_all(&net, &building, DEFAULT_CAP).unwrap();
    let served: PredictResponse = serde_json::from_value(first).unwrap();
    assert_eq!(served.columns.len(), direct.columns.len());
    for (s, d) in served.columns.iter().zip(direct.columns.columns()) {
        assert_eq!((s.x, s.y, s.ctype), (d.x, d.y, d.ctype));
    }
    let (via_fn, _) = handle_predict(&net, "tiny", &req).unwrap();
    assert_eq!(via_fn.columns, served.columns);
    assert_eq!(via_fn.terminated_by, served.terminated_by);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_requests_agree() {
    let state = replay_state();
    let body = walls_body(&rect_walls(10.0, 10.0, 110.0, 90.0));
    let handles: Vec<_> = (0..8)
        .map(|_| tokio::spawn(post(state.clone(), body.clone())))
        .collect();
    let mut outs = Vec::new();
    for h in handles {
        let (s, v) = h.await.unwrap();
        assert_eq!(s, StatusCode::OK);
        outs.push(v["columns"].clone());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}
