#![allow(dead_code)]

use std::time::Duration;

use cardioloop_net::{AckFrame, CmdFrame, CmdKind, ErrorFrame, Frame, Role, StateFrame};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncRead, AsyncWrite};
use tokio_util::codec::{Framed, LinesCodec};

pub const WAIT: Duration = Duration::from_secs(30);

/// Line-level test client over any byte stream.
pub struct Client<S> {
    io: Framed<S, LinesCodec>,
}

impl<S: AsyncRead + AsyncWrite + Unpin> Client<S> {
    pub fn new(stream: S) -> Self {
        Self {
            io: Framed::new(stream, LinesCodec::new()),
        }
    }

    pub async fn send(&mut self, frame: &Frame) {
        self.send_raw(&frame.to_line()).await;
    }

    pub async fn send_raw(&mut self, line: &str) {
        self.io.send(line).await.expect("send");
    }

    /// Next raw line, or `None` once the server has closed the connection.
    pub async fn recv_line(&mut self) -> Option<String> {
        match tokio::time::timeout(WAIT, self.io.next()).await {
            Ok(Some(Ok(line))) => Some(line),
            Ok(_) => None,
            Err(_) => panic!("no frame within {WAIT:?}"),
        }
    }

    pub async fn recv(&mut self) -> Frame {
        let line = self.recv_line().await.expect("connection closed");
        Frame::parse(&line).unwrap_or_else(|e| panic!("server sent an unparsable frame {line}: {e:?}"))
    }

    pub async fn hello(&mut self, role: Role) -> AckFrame {
        self.send(&Frame::Hello { role }).await;
        self.ack().await
    }

    /// Next ack, skipping state frames.
    pub async fn ack(&mut self) -> AckFrame {
        loop {
            match self.recv().await {
                Frame::Ack(a) => return *a,
                Frame::State(_) => continue,
                other => panic!("expected ack, got {other:?}"),
            }
        }
    }

    /// Next error, skipping state frames.
    pub async fn error(&mut self) -> ErrorFrame {
        loop {
            match self.recv().await {
                Frame::Error(e) => return e,
                Frame::State(_) => continue,
                other => panic!("expected error, got {other:?}"),
            }
        }
    }

    /// Next state, skipping acks.
    pub async fn state(&mut self) -> StateFrame {
        loop {
            match self.recv().await {
                Frame::State(s) => return *s,
                Frame::Ack(_) => continue,
                other => panic!("expected state, got {other:?}"),
            }
        }
    }

    pub async fn cmd(&mut self, cmd: CmdFrame) {
        self.send(&Frame::Cmd(cmd)).await;
    }
}

pub fn cmd(kind: CmdKind, id: u64) -> CmdFrame {
    CmdFrame {
        id: Some(id),
        ..CmdFrame::new(kind)
    }
}
