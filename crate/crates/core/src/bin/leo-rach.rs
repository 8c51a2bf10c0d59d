fn main() {
    std::process::exit(leo_rach::cli::run(std::env::args_os()));
}
