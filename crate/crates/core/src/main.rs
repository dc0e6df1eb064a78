use clap::Parser;

fn main() -> std::process::ExitCode {
    harmonic_afem::cli::main_with(harmonic_afem::cli::Cli::parse())
}
