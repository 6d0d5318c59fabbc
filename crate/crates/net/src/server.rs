//! Transports: newline-delimited JSON over TCP, the same frames as WebSocket
//! text messages, and an in-memory pipe for tests.

use std::future::ready;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use cardioloop_core::session::SessionError;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite, DuplexStream};
use tokio::net::{TcpListener, TcpStream};
use tokio_util::codec::{FramedRead, FramedWrite, LinesCodec};
use tower_http::services::ServeDir;

use crate::conn::{self, FrameCodec, Line};
use crate::engine::{spawn_engine, EngineConfig, EngineHandle};
use crate::protocol::MAX_FRAME_BYTES;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] SessionError),
    #[error("console directory {0} does not exist")]
    ConsoleDir(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// TCP listen address; port 0 picks a free port.
    pub addr: SocketAddr,
    /// WebSocket gateway address. Defaults to the TCP port + 1 when a console
    /// directory is given.
    pub ws_addr: Option<SocketAddr>,
    /// Static files served next to the `/ws` route.
    pub console_dir: Option<PathBuf>,
    pub engine: EngineConfig,
}

impl ServerOptions {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            ws_addr: None,
            console_dir: None,
            engine: EngineConfig::default(),
        }
    }
}

pub struct Server {
    tcp: TcpListener,
    ws: Option<TcpListener>,
    console_dir: Option<PathBuf>,
    engine: EngineConfig,
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })
}

impl Server {
    pub async fn bind(opts: ServerOptions) -> Result<Self, ServeError> {
        opts.engine.validate()?;
        if let Some(dir) = &opts.console_dir {
            if !dir.is_dir() {
                return Err(ServeError::ConsoleDir(dir.clone()));
            }
        }
        let tcp = bind(opts.addr).await?;
        let ws_addr = match (opts.ws_addr, &opts.console_dir) {
            (Some(addr), _) => Some(addr),
            (None, Some(_)) => {
                let mut addr = tcp.local_addr()?;
                addr.set_port(addr.port().checked_add(1).unwrap_or(0));
                Some(addr)
            }
            (None, None) => None,
        };
        let ws = match ws_addr {
            Some(addr) => Some(bind(addr).await?),
            None => None,
        };
        Ok(Self {
            tcp,
            ws,
            console_dir: opts.console_dir,
            engine: opts.engine,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.tcp.local_addr().expect("bound listener has an address")
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws.as_ref().map(|l| l.local_addr().expect("bound listener has an address"))
    }

    /// Start the engine and accept connections until the task is dropped.
    pub async fn run(self) -> Result<(), ServeError> {
        let engine = spawn_engine(self.engine)?;
        if let Some(ws) = self.ws {
            let app = gateway(engine.clone(), self.console_dir);
            tokio::spawn(async move {
                if let Err(e) = axum::serve(ws, app).await {
                    tracing::error!(error = %e, "websocket gateway stopped");
                }
            });
        }
        loop {
            let (stream, peer) = self.tcp.accept().await?;
            let _ = stream.set_nodelay(true);
            tracing::debug!(%peer, "tcp client connected");
            tokio::spawn(serve_stream(engine.clone(), stream));
        }
    }
}

async fn serve_stream(engine: EngineHandle, stream: TcpStream) {
    let (r, w) = stream.into_split();
    serve_io(engine, r, w).await;
}

async fn serve_io<R, W>(engine: EngineHandle, r: R, w: W)
where
    R: AsyncRead + Unpin,
    W: AsyncWrite + Unpin + Send + 'static,
{
    let lines = FramedRead::new(r, FrameCodec::new()).filter_map(|r| ready(r.ok()));
    let sink = FramedWrite::new(w, LinesCodec::new());
    conn::serve(engine, lines, sink).await;
}

impl EngineHandle {
    /// A client connection without a socket: the returned stream speaks the
    /// same newline-delimited frames as a TCP client.
    pub fn connect_in_memory(&self) -> DuplexStream {
        let (client, server) = tokio::io::duplex(1 << 18);
        let (r, w) = tokio::io::split(server);
        tokio::spawn(serve_io(self.clone(), r, w));
        client
    }
}

fn gateway(engine: EngineHandle, console_dir: Option<PathBuf>) -> Router {
    let router = Router::new().route("/ws", get(upgrade)).with_state(engine);
    match console_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(engine): State<EngineHandle>) -> Response {
    // Oversized messages are answered with an error frame rather than
    // dropping the socket, so allow some headroom above the frame limit.
    ws.max_message_size(4 * MAX_FRAME_BYTES)
        .on_upgrade(move |socket| serve_websocket(engine, socket))
}

async fn serve_websocket(engine: EngineHandle, socket: WebSocket) {
    let (sink, stream) = socket.split();
    let lines = stream
        .take_while(|m| ready(m.is_ok()))
        .filter_map(|m| {
            ready(match m {
                Ok(Message::Text(t)) => Some(text_line(t.as_str())),
                Ok(Message::Binary(b)) => Some(match std::str::from_utf8(&b) {
                    Ok(t) => text_line(t),
                    Err(_) => Line::NotUtf8,
                }),
                _ => None,
            })
        });
    let lines = Box::pin(lines);
    let sink = sink.with(|line: String| ready(Ok::<_, axum::Error>(Message::Text(line.into()))));
    conn::serve(engine, lines, Box::pin(sink)).await;
}

/// One message is one frame; a trailing line terminator is tolerated.
fn text_line(text: &str) -> Line {
    let text = text.strip_suffix('\n').unwrap_or(text);
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.len() > MAX_FRAME_BYTES {
        Line::TooLong
    } else {
        Line::Text(text.to_owned())
    }
}
