//! Per-connection protocol handling, independent of the transport.
//!
//! A reader loop parses lines and forwards them to the engine; a writer task
//! drains the client's queue and the state broadcast. A writer that cannot
//! keep up lags the broadcast instead of slowing the engine, and reports how
//! many state frames it missed in the next one it sends.

use std::future::{self, Future};
use std::io;
use std::sync::Arc;

use bytes::BytesMut;
use futures::{Sink, SinkExt, Stream, StreamExt};
use tokio::sync::broadcast::error::RecvError;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_util::codec::{Decoder, LinesCodec, LinesCodecError};

use crate::engine::{Command, EngineHandle, Outbound, TickFrame, CLIENT_QUEUE};
use crate::protocol::{too_large, ErrorCode, ErrorFrame, Frame, Role, MAX_FRAME_BYTES};

/// One inbound line as delivered by a transport.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Line {
    Text(String),
    /// Longer than [`MAX_FRAME_BYTES`]; the content has been discarded.
    TooLong,
    NotUtf8,
}

/// [`LinesCodec`] that reports over-long and non-UTF-8 lines as items rather
/// than errors, so the stream survives them.
#[derive(Debug)]
pub(crate) struct FrameCodec(LinesCodec);

impl FrameCodec {
    pub fn new() -> Self {
        Self(LinesCodec::new_with_max_length(MAX_FRAME_BYTES))
    }

    fn map(r: Result<Option<String>, LinesCodecError>) -> io::Result<Option<Line>> {
        match r {
            Ok(line) => Ok(line.map(Line::Text)),
            Err(LinesCodecError::MaxLineLengthExceeded) => Ok(Some(Line::TooLong)),
            Err(LinesCodecError::Io(e)) if e.kind() == io::ErrorKind::InvalidData => Ok(Some(Line::NotUtf8)),
            Err(LinesCodecError::Io(e)) => Err(e),
        }
    }
}

impl Decoder for FrameCodec {
    type Item = Line;
    type Error = io::Error;

    fn decode(&mut self, buf: &mut BytesMut) -> io::Result<Option<Line>> {
        Self::map(self.0.decode(buf))
    }

    fn decode_eof(&mut self, buf: &mut BytesMut) -> io::Result<Option<Line>> {
        Self::map(self.0.decode_eof(buf))
    }
}

/// Serve one client until it disconnects or is refused.
pub(crate) async fn serve<R, W>(engine: EngineHandle, mut lines: R, sink: W)
where
    R: Stream<Item = Line> + Unpin,
    W: Sink<String> + Unpin + Send + 'static,
{
    let conn = engine.next_conn_id();
    let (out, out_rx) = mpsc::channel(CLIENT_QUEUE);
    let writer = tokio::spawn(write_loop(sink, out_rx));
    let mut role: Option<Role> = None;
    let send = |frame: Frame| out.send(Outbound::Frame(frame));

    while let Some(line) = lines.next().await {
        let frame = match line {
            Line::Text(text) => Frame::parse(&text),
            Line::TooLong => Err(too_large(None)),
            Line::NotUtf8 => Err(ErrorFrame::new(ErrorCode::BadFrame, "frame is not valid UTF-8")),
        };
        let frame = match frame {
            Ok(f) => f,
            Err(e) => {
                let _ = send(Frame::Error(e)).await;
                continue;
            }
        };
        let cmd = match (role, frame) {
            (None, Frame::Hello { role: r }) => {
                let (done, accepted) = oneshot::channel();
                let hello = Command::Hello {
                    conn,
                    role: r,
                    replies: out.clone(),
                    done,
                };
                if !engine.send(hello).await {
                    break;
                }
                match accepted.await {
                    Ok(Ok(())) => role = Some(r),
                    Ok(Err(e)) => {
                        let _ = send(Frame::Error(e)).await;
                        let _ = out.send(Outbound::Close).await;
                        break;
                    }
                    Err(_) => break,
                }
                continue;
            }
            (None, _) => {
                let _ = send(Frame::error(ErrorCode::HelloRequired, "send hello with a role first")).await;
                continue;
            }
            (Some(_), Frame::Hello { .. }) => {
                let _ = send(Frame::error(ErrorCode::RoleRejected, "role already declared")).await;
                continue;
            }
            (Some(_), Frame::Ecg { t, v }) => Command::Ecg {
                conn,
                t: t.as_slice().to_vec(),
                v: v.as_slice().to_vec(),
            },
            (Some(_), Frame::Effort { power_w }) => Command::Effort { conn, power_w },
            (Some(_), Frame::Cmd(cmd)) => Command::Cmd { conn, cmd },
            (Some(_), Frame::State(_) | Frame::Ack(_) | Frame::Error(_)) => {
                let _ = send(Frame::error(ErrorCode::NotAccepted, "state, ack and error frames are server-sent")).await;
                continue;
            }
        };
        if !engine.send(cmd).await {
            break;
        }
    }

    if role.is_some() {
        engine.send(Command::Leave { conn }).await;
    }
    drop(out);
    let _ = writer.await;
}

async fn write_loop<W>(mut sink: W, mut rx: mpsc::Receiver<Outbound>)
where
    W: Sink<String> + Unpin,
{
    let mut states: Option<broadcast::Receiver<Arc<TickFrame>>> = None;
    let mut dropped = 0u64;
    loop {
        let line = tokio::select! {
            biased;
            out = rx.recv() => match out {
                Some(Outbound::Frame(f)) => f.to_line(),
                Some(Outbound::Subscribe(r)) => {
                    states = Some(r);
                    continue;
                }
                Some(Outbound::Close) | None => break,
            },
            tick = next_state(&mut states) => match tick {
                Ok(t) => {
                    let line = t.line_with_dropped(dropped);
                    dropped = 0;
                    line
                }
                Err(RecvError::Lagged(n)) => {
                    dropped += n;
                    continue;
                }
                Err(RecvError::Closed) => {
                    states = None;
                    continue;
                }
            },
        };
        if sink.send(line).await.is_err() {
            break;
        }
    }
    let _ = sink.close().await;
}

fn next_state(
    states: &mut Option<broadcast::Receiver<Arc<TickFrame>>>,
) -> impl Future<Output = Result<Arc<TickFrame>, RecvError>> + '_ {
    async move {
        match states {
            Some(rx) => rx.recv().await,
            None => future::pending().await,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codec_survives_long_and_invalid_lines() {
        let mut codec = FrameCodec::new();
        let mut buf = BytesMut::new();
        buf.extend_from_slice(&vec![b'x'; MAX_FRAME_BYTES + 10]);
        buf.extend_from_slice(b"\n\xff\xfe\n{\"type\":\"hello\",\"role\":\"observer\"}\r\n");
        let mut items = Vec::new();
        while let Some(line) = codec.decode(&mut buf).unwrap() {
            items.push(line);
        }
        assert_eq!(
            items,
            vec![
                Line::TooLong,
                Line::NotUtf8,
                Line::Text(r#"{"type":"hello","role":"observer"}"#.into())
            ]
        );
    }

    #[test]
    fn line_at_the_limit_is_accepted() {
        let mut codec = FrameCodec::new();
        let mut buf = BytesMut::new();
        buf.extend_from_slice(&vec![b' '; MAX_FRAME_BYTES]);
        buf.extend_from_slice(b"\n");
        assert!(matches!(codec.decode(&mut buf).unwrap(), Some(Line::Text(_))));
    }
}
