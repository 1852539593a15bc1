use clap::Parser;

fn main() {
    let cli = voxmpc_cli::Cli::parse();
    std::process::exit(voxmpc_cli::execute(cli));
}
