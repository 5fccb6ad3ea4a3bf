use clap::Parser;

fn main() {
    let cli = mfg_cli::app::Cli::parse();
    std::process::exit(mfg_cli::app::run(cli));
}
