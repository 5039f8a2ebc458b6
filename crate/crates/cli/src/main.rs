use clap::Parser;

fn main() {
    std::process::exit(credit_cli::run(credit_cli::Cli::parse()));
}
