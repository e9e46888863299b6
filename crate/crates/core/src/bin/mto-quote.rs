use std::process::ExitCode;

fn main() -> ExitCode {
    mto_quote::cli::main_with_args(std::env::args_os())
}
