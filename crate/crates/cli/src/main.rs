use clap::Parser;

fn main() {
    let cli = bicwg_cli::args::Cli::parse();
    std::process::exit(bicwg_cli::run(cli));
}
