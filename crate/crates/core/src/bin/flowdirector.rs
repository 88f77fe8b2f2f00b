fn main() {
    std::process::exit(flowdirector::cli::run(std::env::args_os()));
}
