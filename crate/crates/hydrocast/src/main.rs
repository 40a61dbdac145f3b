use std::process::ExitCode;

fn main() -> ExitCode {
    hydrocast::cli::main_entry()
}
