fn main() {
    std::process::exit(dtaigen::cli::dispatch(std::env::args_os()));
}
