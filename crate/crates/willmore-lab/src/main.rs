use clap::Parser;

fn main() {
    let cli = willmore_lab::cli::Cli::parse();
    std::process::exit(willmore_lab::cli::run(cli));
}
