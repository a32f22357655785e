from strange_reservoir import main

if __name__ == "__main__":
    main()
