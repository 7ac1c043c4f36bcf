use std::path::PathBuf;
use std::process::ExitCode;

fn usage() -> ExitCode {
    eprintln!("usage: degenlab <run|sweep|validate> <config.json>");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        return usage();
    }
    let path = PathBuf::from(&args[2]);
    let code = match args[1].as_str() {
        "run" => degenlab::cli::run(&path),
        "sweep" => degenlab::cli::sweep(&path),
        "validate" => degenlab::cli::validate(&path),
        _ => return usage(),
    };
    ExitCode::from(code as u8)
}
