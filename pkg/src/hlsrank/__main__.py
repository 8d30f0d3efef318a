from hlsrank.cli import main

main()
