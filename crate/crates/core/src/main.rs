use std::process::ExitCode;

fn main() -> ExitCode {
    unicsi::cli::main_entry()
}
