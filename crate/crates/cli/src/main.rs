fn main() {
    std::process::exit(flowdj_cli::run(std::env::args_os()));
}
