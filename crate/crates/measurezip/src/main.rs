fn main() {
    std::process::exit(measurezip::cli::run(std::env::args_os()));
}
