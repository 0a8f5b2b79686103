//! Reference echo tracker speaking the external-tracker wire protocol on
//! stdin/stdout. Used by `trackeval conformance` and the integration tests.

use std::io::{self, BufWriter};
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    match trackeval_core::trackers::serve_echo(stdin, stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": { "code": "io_error", "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
