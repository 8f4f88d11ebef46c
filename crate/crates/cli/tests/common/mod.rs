#![allow(dead_code)]

use mural_cli::service::{self, AppState, ServiceSettings};
use mural_core::TimeSeries;

pub struct Server {
    pub base: String,
    handle: tokio::task::JoinHandle<()>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

pub async fn start(settings: ServiceSettings) -> Server {
    let state = AppState::new(settings).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        service::serve(listener, state).await.unwrap();
    });
    Server {
        base: format!("http://{addr}/v1"),
        handle,
    }
}

pub fn csv_text(x: &TimeSeries) -> String {
    let mut buf = Vec::new();
    x.write_csv(&mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}
