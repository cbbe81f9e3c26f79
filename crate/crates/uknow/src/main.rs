use std::io;
use std::panic;
use std::process::ExitCode;

use uknow::cli::{dispatch, Io};

fn main() -> ExitCode {
    let status = panic::catch_unwind(|| {
        let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());
        dispatch(
            std::env::args_os(),
            &mut Io {
                out: &mut out,
                err: &mut err,
            },
        )
    })
    .unwrap_or_else(|_| {
        eprintln!(r#"{{"error":"internal","message":"unexpected panic","status":3}}"#);
        3
    });
    ExitCode::from(status as u8)
}
