//! Standard output with write failures mapped to an exit status. A closed
//! pipe (`cardioloop analyze log | head`) silently ends the output.

use std::io::{self, Write};

use crate::exit::{CliResult, OrExit, IO};

pub struct Output {
    inner: Box<dyn Write>,
    closed: bool,
}

impl Output {
    pub fn stdout() -> Self {
        Self {
            inner: Box::new(io::stdout().lock()),
            closed: false,
        }
    }

    pub fn text(&mut self, s: &str) -> CliResult {
        if self.closed {
            return Ok(());
        }
        let r = self.inner.write_all(s.as_bytes());
        self.check(r)
    }

    pub fn line(&mut self, s: impl AsRef<str>) -> CliResult {
        self.text(s.as_ref())?;
        self.text("\n")
    }

    pub fn flush(&mut self) -> CliResult {
        if self.closed {
            return Ok(());
        }
        let r = self.inner.flush();
        self.check(r)
    }

    fn check(&mut self, r: io::Result<()>) -> CliResult {
        match r {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {
                self.closed = true;
                Ok(())
            }
            r => r.or_exit(IO),
        }
    }
}
