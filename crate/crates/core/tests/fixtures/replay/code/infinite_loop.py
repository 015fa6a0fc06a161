def run_analysis(data):
    while True:
        pass
