fn main() {
    std::process::exit(edq::cli::run(std::env::args_os()));
}
