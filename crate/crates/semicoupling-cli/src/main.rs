use clap::Parser;

fn main() {
    std::process::exit(semicoupling_cli::run_main(semicoupling_cli::Cli::parse()));
}
