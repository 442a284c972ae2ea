use clap::Parser;

fn main() {
    let cli = dta_cli::Cli::parse();
    std::process::exit(dta_cli::run(cli));
}
