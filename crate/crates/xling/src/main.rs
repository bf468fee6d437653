use std::process::ExitCode;

use xling::harness::cli;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        eprint!("{}", cli::usage());
        return ExitCode::from(2);
    }
    let (subcommand, opts) = match cli::parse_args(&args) {
        Ok(parsed) => parsed,
        Err(err) => {
            eprintln!("xling: {err}");
            eprint!("{}", cli::usage());
            return ExitCode::from(2);
        }
    };
    match cli::run(&subcommand, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("xling: {err}");
            ExitCode::FAILURE
        }
    }
}
