fn main() {
    std::process::exit(rare_sampler::cli::run(std::env::args_os()));
}
