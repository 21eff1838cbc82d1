fn main() {
    std::process::exit(wtolab::cli::run(std::env::args_os()));
}
