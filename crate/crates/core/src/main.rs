fn main() {
    std::process::exit(specmix::cli::run(std::env::args_os()));
}
