//! `serve`: the live engine behind TCP and the WebSocket gateway.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use cardioloop_core::session::{MAX_TICK_HZ, MIN_TICK_HZ};
use cardioloop_net::protocol::Mode;
use cardioloop_net::{EngineConfig, ServeError, Server, ServerOptions};
use clap::Args;

use crate::config::Settings;
use crate::exit::{CliResult, Failure, OrExit, CONFIG, IO, NO_INPUT, SOFTWARE};

/// Directory for finished session logs.
pub const LOG_DIR_ENV: &str = "CARDIOLOOP_LOG_DIR";

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    #[arg(long, value_parser = clap::value_parser!(u32).range(MIN_TICK_HZ as i64..=MAX_TICK_HZ as i64))]
    pub tick_hz: Option<u32>,
    /// sensor, manual or sim.
    #[arg(long, default_value_t = Mode::Sensor)]
    pub mode: Mode,
    /// WebSocket gateway port. Defaults to the TCP port + 1 when
    /// `--console-dir` is given.
    #[arg(long)]
    pub ws_port: Option<u16>,
    /// Static console files, served next to the `/ws` route.
    #[arg(long)]
    pub console_dir: Option<PathBuf>,
}

pub fn serve(settings: &Settings, args: &ServeArgs) -> CliResult {
    let mut session = settings.session.clone();
    if let Some(hz) = args.tick_hz {
        session.tick_hz = hz;
    }
    let engine = EngineConfig {
        session,
        mode: args.mode,
        rider: settings.rider.clone(),
        policy: settings.policy.clone(),
        log_dir: std::env::var_os(LOG_DIR_ENV).map(PathBuf::from),
        ..EngineConfig::default()
    };
    let opts = ServerOptions {
        ws_addr: args.ws_port.map(|p| SocketAddr::new(args.host, p)),
        console_dir: args.console_dir.clone(),
        engine,
        ..ServerOptions::new(SocketAddr::new(args.host, args.port))
    };
    let runtime = tokio::runtime::Runtime::new().or_exit(SOFTWARE)?;
    runtime.block_on(async move {
        let server = Server::bind(opts).await.map_err(serve_failure)?;
        let mut stdout = std::io::stdout();
        writeln!(stdout, "listening on {}", server.local_addr()).or_exit(IO)?;
        if let Some(ws) = server.ws_addr() {
            writeln!(stdout, "websocket on ws://{ws}/ws").or_exit(IO)?;
        }
        stdout.flush().or_exit(IO)?;
        tokio::select! {
            r = server.run() => r.map_err(serve_failure),
            r = tokio::signal::ctrl_c() => r.or_exit(IO),
        }
    })
}

fn serve_failure(e: ServeError) -> Failure {
    let code = match e {
        ServeError::Config(_) => CONFIG,
        ServeError::ConsoleDir(_) => NO_INPUT,
        ServeError::Bind { .. } | ServeError::Io(_) => IO,
    };
    Failure::new(code, e)
}
