#include "seudo/thread_pool.hpp"

namespace seudo {

ThreadPool::ThreadPool(std::size_t threads)
{
	for (std::size_t i = 1; i < threads; i++)
		workers_.emplace_back([this] { workerLoop(); });
}

ThreadPool::~ThreadPool()
{
	{
		std::lock_guard<std::mutex> lock(mutex_);
		stop_ = true;
	}
	wake_.notify_all();
	for (auto &t : workers_)
		t.join();
}

std::vector<std::exception_ptr> ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn)
{
	std::vector<std::exception_ptr> errors(n);
	if (n == 0)
		return errors;
	if (workers_.empty() || n == 1) {
		for (std::size_t i = 0; i < n; i++) {
			try {
				fn(i);
			} catch (...) {
				errors[i] = std::current_exception();
			}
		}
		return errors;
	}

	{
		std::lock_guard<std::mutex> lock(mutex_);
		job_ = &fn;
		errors_ = &errors;
		next_ = 0;
		total_ = n;
		finished_ = 0;
		generation_++;
	}
	wake_.notify_all();
	drain();

	std::unique_lock<std::mutex> lock(mutex_);
	done_.wait(lock, [this] { return finished_ == total_; });
	job_ = nullptr;
	errors_ = nullptr;
	return errors;
}

// Takes indices off the current job until none are left.
void ThreadPool::drain()
{
	for (;;) {
		std::size_t i;
		const std::function<void(std::size_t)> *fn;
		{
			std::lock_guard<std::mutex> lock(mutex_);
			if (job_ == nullptr || next_ >= total_)
				return;
			i = next_++;
			fn = job_;
		}
		std::exception_ptr err;
		try {
			(*fn)(i);
		} catch (...) {
			err = std::current_exception();
		}
		bool last;
		{
			std::lock_guard<std::mutex> lock(mutex_);
			(*errors_)[i] = err;
			last = ++finished_ == total_;
		}
		if (last)
			done_.notify_all();
	}
}

void ThreadPool::workerLoop()
{
	std::size_t seen = 0;
	for (;;) {
		{
			std::unique_lock<std::mutex> lock(mutex_);
			wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
			if (stop_)
				return;
			seen = generation_;
		}
		drain();
	}
}

} // namespace seudo
