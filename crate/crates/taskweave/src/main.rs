use clap::Parser;

fn main() {
    let cli = taskweave::cli::Cli::parse();
    std::process::exit(taskweave::cli::run(cli));
}
