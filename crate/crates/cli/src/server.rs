//! Stateless HTTP scoring service over a shared, read-only estimator.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ippsm_core::Estimator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::response::{build_response, ErrorBody, ScoreRequest, DEFAULT_K};

/// Largest `k` a request may ask for.
const MAX_K: usize = 64;

#[derive(Clone)]
struct AppState {
    estimator: Arc<dyn Estimator>,
    pool: Arc<Vec<char>>,
}

/// Routes: `GET /health`, `POST /score`. Suggestions draw from the full
/// alphabet of the estimator.
pub fn router(estimator: Arc<dyn Estimator>) -> Router {
    let pool = Arc::new(estimator.alphabet().symbols().to_vec());
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/score", post(score))
        .with_state(AppState { estimator, pool })
}

fn reject(status: StatusCode, body: ErrorBody) -> Response {
    (status, Json(body)).into_response()
}

async fn score(State(state): State<AppState>, body: Bytes) -> Response {
    let request: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return reject(
                StatusCode::BAD_REQUEST,
                ErrorBody {
                    error: format!("malformed request: {e}"),
                    ..ErrorBody::default()
                },
            )
        }
    };
    let len = request.password.chars().count();
    let limit = state.estimator.max_len().unwrap_or(usize::MAX);
    if len == 0 || len > limit {
        return reject(
            StatusCode::UNPROCESSABLE_ENTITY,
            ErrorBody {
                error: format!("password length {len} outside 1..={limit}"),
                limit: (limit != usize::MAX).then_some(limit),
                ..ErrorBody::default()
            },
        );
    }
    let k = request.k.unwrap_or(DEFAULT_K).min(MAX_K);
    let seed = request.seed.unwrap_or_else(rand::random);
    // Scoring is CPU-bound; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        build_response(&*state.estimator, &request.password, k, &state.pool, &mut rng)
            .map_err(|e| ErrorBody::from_core(None, &e))
    })
    .await;
    match result {
        Ok(Ok(resp)) => ([(header::CONTENT_TYPE, "application/json")], Json(resp)).into_response(),
        Ok(Err(body)) if body.character.is_some() || body.limit.is_some() => {
            reject(StatusCode::UNPROCESSABLE_ENTITY, body)
        }
        Ok(Err(body)) => reject(StatusCode::INTERNAL_SERVER_ERROR, body),
        Err(e) => reject(
            StatusCode::INTERNAL_SERVER_ERROR,
            ErrorBody {
                error: format!("scoring task failed: {e}"),
                ..ErrorBody::default()
            },
        ),
    }
}

pub async fn serve(estimator: Arc<dyn Estimator>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(estimator)).await?;
    Ok(())
}
