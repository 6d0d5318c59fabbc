//! The same frames over TCP and over the WebSocket gateway.

mod common;

use std::net::SocketAddr;

use cardioloop_core::session::SessionConfig;
use cardioloop_core::ZoneId;
use cardioloop_net::{CmdKind, EngineConfig, ErrorCode, Frame, Mode, Role, Server, ServerOptions, MAX_FRAME_BYTES};
use common::{cmd, Client, WAIT};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

fn localhost() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

async fn start(opts: ServerOptions) -> (SocketAddr, Option<SocketAddr>) {
    let server = Server::bind(opts).await.unwrap();
    let addrs = (server.local_addr(), server.ws_addr());
    tokio::spawn(server.run());
    addrs
}

async fn tcp(addr: SocketAddr) -> Client<TcpStream> {
    Client::new(TcpStream::connect(addr).await.unwrap())
}

#[tokio::test]
async fn oversized_line_is_refused_and_the_connection_survives() {
    let (addr, ws) = start(ServerOptions::new(localhost())).await;
    assert!(ws.is_none());
    let mut c = tcp(addr).await;
    let big = format!(r#"{{"type":"hello","role":"observer","pad":"{}"}}"#, "x".repeat(MAX_FRAME_BYTES));
    c.send_raw(&big).await;
    assert_eq!(c.error().await.code, ErrorCode::FrameTooLarge);
    let ack = c.hello(Role::Observer).await;
    assert_eq!(ack.note.as_deref(), Some("hello observer"));
}

#[tokio::test]
async fn bind_rejects_a_bad_configuration_or_console_dir() {
    let mut opts = ServerOptions::new(localhost());
    opts.engine.session.tick_hz = 0;
    assert!(Server::bind(opts).await.is_err());
    let mut opts = ServerOptions::new(localhost());
    opts.console_dir = Some("/definitely/not/here".into());
    assert!(Server::bind(opts).await.is_err());
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut body = String::new();
    tokio::time::timeout(WAIT, s.read_to_string(&mut body)).await.unwrap().unwrap();
    body
}

#[tokio::test]
async fn gateway_serves_the_console_and_identical_frames() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<title>cardioloop console</title>").unwrap();
    let mut opts = ServerOptions::new(localhost());
    opts.console_dir = Some(dir.path().to_path_buf());
    opts.engine = EngineConfig {
        mode: Mode::Sim,
        session: SessionConfig {
            training_s: 0.0,
            zone_schedule: vec![(ZoneId::new(1).unwrap(), 2.0)],
            ..Default::default()
        },
        ..Default::default()
    };
    let (addr, ws_addr) = start(opts).await;
    let ws_addr = ws_addr.unwrap();
    assert_eq!(ws_addr.port(), addr.port() + 1);

    let page = http_get(ws_addr, "/index.html").await;
    assert!(page.starts_with("HTTP/1.1 200"), "{page}");
    assert!(page.contains("cardioloop console"));
    assert!(http_get(ws_addr, "/missing.js").await.starts_with("HTTP/1.1 404"));

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{ws_addr}/ws")).await.unwrap();
    ws.send(Message::text(Frame::Hello { role: Role::Observer }.to_line())).await.unwrap();
    let mut ws_lines = Vec::new();
    let mut tcp_console = tcp(addr).await;
    tcp_console.hello(Role::Console).await;
    // Wait for the gateway's hello ack before starting, so it sees every tick.
    let first = ws.next().await.unwrap().unwrap();
    assert!(matches!(Frame::parse(first.to_text().unwrap()).unwrap(), Frame::Ack(_)));
    tcp_console.cmd(cmd(CmdKind::Start, 1)).await;

    let mut tcp_lines = Vec::new();
    while tcp_lines.len() < 100 {
        let line = tcp_console.recv_line().await.unwrap();
        if line.contains(r#""type":"state""#) {
            tcp_lines.push(line);
        }
    }
    while ws_lines.len() < 100 {
        let msg = tokio::time::timeout(WAIT, ws.next()).await.unwrap().unwrap().unwrap();
        let text = msg.to_text().unwrap().to_owned();
        assert!(!text.ends_with('\n'));
        if text.contains(r#""type":"state""#) {
            ws_lines.push(text);
        }
    }
    assert_eq!(tcp_lines, ws_lines);
    let Frame::State(last) = Frame::parse(tcp_lines.last().unwrap()).unwrap() else { panic!() };
    assert!(last.state.end_prompt);

    // The gateway also reports bad frames without closing.
    ws.send(Message::text(r#"{"type":"nope"}"#)).await.unwrap();
    let reply = tokio::time::timeout(WAIT, ws.next()).await.unwrap().unwrap().unwrap();
    let Frame::Error(e) = Frame::parse(reply.to_text().unwrap()).unwrap() else { panic!() };
    assert_eq!(e.code, ErrorCode::UnknownType);
}
