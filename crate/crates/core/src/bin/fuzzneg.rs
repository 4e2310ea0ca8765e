use std::process::ExitCode;

fn main() -> ExitCode {
    fuzzy_negotiation::cli::main()
}
