#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace seudo {

// Fixed set of worker threads that run blocking parallel-for jobs. The
// calling thread takes part in the work, so a pool of size 1 spawns nothing
// and runs everything inline.
class ThreadPool
{
public:
	explicit ThreadPool(std::size_t threads);
	~ThreadPool();

	ThreadPool(const ThreadPool &) = delete;
	ThreadPool &operator=(const ThreadPool &) = delete;

	std::size_t size() const { return workers_.size() + 1; }

	// Calls fn(i) for every i in [0, n) and returns when all are done.
	// Exceptions are not propagated; the caller gets one error flag per index.
	std::vector<std::exception_ptr> parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

private:
	void workerLoop();
	void drain();

	std::vector<std::thread> workers_;
	std::mutex mutex_;
	std::condition_variable wake_;
	std::condition_variable done_;

	// Current job.
	const std::function<void(std::size_t)> *job_ = nullptr;
	std::vector<std::exception_ptr> *errors_ = nullptr;
	std::size_t next_ = 0;
	std::size_t total_ = 0;
	std::size_t finished_ = 0;
	std::size_t generation_ = 0;
	bool stop_ = false;
};

} // namespace seudo
