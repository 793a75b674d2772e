//! Reference `EPS1` backend that answers every request with zeros.

use std::io;
use std::process::ExitCode;

use ddimstego_core::ddim::protocol::{serve, PROTOCOL_EXIT_CODE};

fn main() -> ExitCode {
    match serve(io::stdin().lock(), io::stdout().lock(), |req| Ok(vec![0.0; req.numel()])) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("eps1-echo: {e}");
            ExitCode::from(PROTOCOL_EXIT_CODE as u8)
        }
    }
}
