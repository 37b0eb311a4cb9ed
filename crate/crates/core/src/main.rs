use chaos_sampler::cli;

fn main() {
    std::process::exit(cli::run_cli());
}
