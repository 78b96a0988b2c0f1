fn main() -> std::process::ExitCode {
    gaqueue::cli::main()
}
